"""Monte Carlo estimators for hitting-time functionals of Gaussian processes.

Every estimator follows the same aggregation contract: replicates are cut
into fixed blocks (the block size depends only on the sampler plan), each
block writes its per-replicate contributions into a replicate-indexed
buffer, and the reductions run over that buffer after all blocks finish.
The worker count therefore never changes a single bit of the output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import kernels as K
from . import oracles
from .errors import CensoringExcess, InvalidArgument, KernelH1Violated, NodesMissing, TooFewProbes
from .hitting import build_profile, first_hit_block, integrate_dtau, integrate_dy
from .simulate import Grid, Path, SamplerPlan, interpolate, make_plan, sample_block


@dataclass(frozen=True)
class McConfig:
    replicates: int
    master_seed: int
    grid: Grid
    workers: int = 1
    method: str | None = None

    def __post_init__(self):
        if int(self.replicates) != self.replicates or self.replicates < 2:
            raise InvalidArgument(f"need at least 2 replicates, got {self.replicates}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise InvalidArgument(f"workers must be a positive integer, got {self.workers}")
        if int(self.master_seed) != self.master_seed or not (0 <= self.master_seed < 2**64):
            raise InvalidArgument(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")

    def to_dict(self) -> dict:
        return {
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "workers": self.workers,
            "grid": self.grid.to_dict(),
            "method": self.method,
        }


@dataclass
class Estimate:
    mean: float
    stderr: float
    replicates: int
    censored_count: int = 0
    truncation_bound: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "replicates": self.replicates,
            "censored": self.censored_count,
            "truncation_bound": self.truncation_bound,
            **self.extra,
        }


@dataclass
class Residual:
    lhs: float
    rhs: float
    stderr: float
    lhs_stderr: float
    rhs_stderr: float
    replicates: int
    censored_count: int
    grid_n: int
    extra: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "stderr": self.stderr,
            "lhs_stderr": self.lhs_stderr,
            "rhs_stderr": self.rhs_stderr,
            "replicates": self.replicates,
            "censored": self.censored_count,
            "grid_n": self.grid_n,
            **self.extra,
        }


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.shape[0]))


def run_replicates(plan: SamplerPlan, cfg: McConfig, block_fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply ``block_fn`` to every block of sampled paths; rows come back in replicate order."""
    rows = plan.block_rows
    starts = list(range(0, cfg.replicates, rows))

    def work(start):
        idx = np.arange(start, min(start + rows, cfg.replicates))
        return np.asarray(block_fn(sample_block(plan, cfg.master_seed, idx)), dtype=float)

    if cfg.workers == 1:
        parts = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(work, starts))
    buffer = np.empty((cfg.replicates,) + parts[0].shape[1:])
    for s, part in zip(starts, parts):
        buffer[s:s + part.shape[0]] = part
    return buffer


def _plan(kernel: K.Kernel, cfg: McConfig) -> SamplerPlan:
    return make_plan(kernel, cfg.grid, cfg.method)


def _martingale(kernel: K.Kernel, values: np.ndarray, dt: float, lam: float, t):
    t = np.asarray(t, dtype=float)
    return np.exp(lam * interpolate(values, dt, t) - 0.5 * lam * lam * np.asarray(K.variance(kernel, t)))


def exp_martingale(kernel: K.Kernel, path: Path, lam: float, t):
    """``M_t = exp(lam X_t - lam^2 V_t / 2)`` with ``X_t`` piecewise linear and ``V_t`` exact."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > path.grid.t_max * (1 + 1e-12)):
        raise InvalidArgument("time outside the path horizon")
    out = _martingale(kernel, path.values, path.grid.dt, lam, t)
    return out[()] if np.ndim(out) == 0 else out


def delta_t_M(kernel: K.Kernel, path: Path, lam: float, t):
    """Extended divergence ``(M_t - 1) / lam``."""
    if lam == 0:
        raise InvalidArgument("lambda must be nonzero")
    return (exp_martingale(kernel, path, lam, t) - 1.0) / lam


def _positive(**kw):
    for name, val in kw.items():
        if not (math.isfinite(val) and val > 0):
            raise InvalidArgument(f"{name} must be positive, got {val}")


def _censoring_bound(censored: np.ndarray, ceiling: float) -> float:
    p, se = _mean_se(censored)
    return (p + se) * ceiling


def laplace_cells(kernel: K.Kernel, levels, alphas, cfg: McConfig) -> dict[tuple[float, float], Estimate]:
    """``E exp(-alpha V(tau_a))`` for every ``(a, alpha)`` pair, all from one path set.

    Paths that stay below ``a`` up to ``t_max`` contribute 0; their true
    contribution lies in ``[0, exp(-alpha V(t_max))]``, which gives the
    reported truncation bound.
    """
    levels = [float(a) for a in np.atleast_1d(levels)]
    alphas = [float(x) for x in np.atleast_1d(alphas)]
    for a in levels:
        _positive(a=a)
    for x in alphas:
        _positive(alpha=x)
    plan = _plan(kernel, cfg)
    dt = cfg.grid.dt

    def block(values):
        cols = []
        for a in levels:
            hit, tau = first_hit_block(values, dt, a)
            v = np.asarray(K.variance(kernel, np.where(hit, tau, 0.0)))
            cols.append((~hit).astype(float))
            for x in alphas:
                cols.append(np.where(hit, np.exp(-x * v), 0.0))
        return np.stack(cols, axis=1)

    buf = run_replicates(plan, cfg, block)
    v_max = float(K.variance(kernel, cfg.grid.t_max))
    out = {}
    col = 0
    for a in levels:
        censored = buf[:, col]
        col += 1
        for x in alphas:
            mean, se = _mean_se(buf[:, col])
            col += 1
            out[(a, x)] = Estimate(
                mean,
                se,
                cfg.replicates,
                int(censored.sum()),
                _censoring_bound(censored, math.exp(-x * v_max)),
                {"sampler": plan.describe()},
            )
    return out


def laplace_hitting(kernel: K.Kernel, a: float, alpha: float, cfg: McConfig) -> Estimate:
    return laplace_cells(kernel, [a], [alpha], cfg)[(float(a), float(alpha))]


def _theorem34_rows(kernel: K.Kernel, a: float, lam: float, values: np.ndarray, grid: Grid) -> np.ndarray:
    """Per-path ``(lhs, rhs integral, censored)`` for the identity truncated at ``t_max``.

    Every hitting time is replaced by ``tau_y ^ t_max``; this keeps the
    identity exact on a finite horizon, so unfinished paths stay in the sample.
    """
    dt = grid.dt
    out = np.empty((values.shape[0], 3))
    for row, v in enumerate(values):
        prof = build_profile(Path(grid, v))

        def m_at(s, v=v):
            return _martingale(kernel, v, dt, lam, s)

        lhs = integrate_dy(prof, a, lambda y, tau: m_at(tau), truncate=True)
        rhs = integrate_dtau(prof, a, lambda y, s, tau: m_at(s) * K.dcov_ds(kernel, s, tau), truncate=True)
        out[row] = lhs, rhs, prof.s_max < a
    return out


def _residual_from(buf: np.ndarray, a: float, lam: float, grid: Grid, extra: dict) -> Residual:
    lhs_i, rhs_int_i, censored = buf[:, 0], buf[:, 1], buf[:, 2]
    rhs_i = a - lam * rhs_int_i
    lhs, lhs_se = _mean_se(lhs_i)
    rhs, rhs_se = _mean_se(rhs_i)
    _, se = _mean_se(lhs_i - rhs_i)
    return Residual(lhs, rhs, se, lhs_se, rhs_se, buf.shape[0], int(censored.sum()), grid.n, extra)


def _check_theorem34(kernel: K.Kernel, a: float, lam: float):
    if not kernel.h1_satisfied:
        raise KernelH1Violated(f"{kernel.label()} does not have a continuous dR/ds")
    _positive(a=a)
    if not math.isfinite(lam):
        raise InvalidArgument(f"lambda must be finite, got {lam}")


def _check_censoring(res: Residual, max_censored: float | None):
    if max_censored is not None and res.censored_count > max_censored * res.replicates:
        raise CensoringExcess(
            f"{res.censored_count} of {res.replicates} paths stay below the level up to t_max"
        )


def theorem34_residual(
    kernel: K.Kernel, a: float, lam: float, cfg: McConfig, max_censored: float | None = None
) -> Residual:
    """Both sides of the level-integrated hitting identity.

    lhs is ``int_0^a E M(tau_y) dy``; rhs is
    ``a - lam E int_(0,a] int_0^1 M(s_z) dR/ds(s_z, tau_y) dz d tau_y`` with
    ``s_z = z tau_{y+} + (1 - z) tau_y``.  ``max_censored`` optionally caps
    the fraction of paths that never reach ``a`` before ``t_max``.
    """
    _check_theorem34(kernel, a, lam)
    plan = _plan(kernel, cfg)
    buf = run_replicates(plan, cfg, lambda vals: _theorem34_rows(kernel, a, lam, vals, cfg.grid))
    res = _residual_from(buf, a, lam, cfg.grid, {"sampler": plan.describe()})
    _check_censoring(res, max_censored)
    return res


def theorem34_refinement(
    kernel: K.Kernel, a: float, lam: float, cfg: McConfig, factors=(16, 4, 1), max_censored: float | None = None
) -> list[Residual]:
    """Residuals on nested grids cut from the same fine paths.

    ``cfg.grid`` is the finest grid; each factor ``f`` keeps every ``f``-th
    node, which is an exact sample on the coarser grid.  Sharing the paths
    makes the differences between refinement levels far less noisy than
    independent runs would.
    """
    _check_theorem34(kernel, a, lam)
    n = cfg.grid.n
    for f in factors:
        if n % f:
            raise InvalidArgument(f"refinement factor {f} does not divide n={n}")
    grids = [Grid(cfg.grid.t_max, n // f) for f in factors]
    plan = _plan(kernel, cfg)

    def block(values):
        return np.concatenate(
            [_theorem34_rows(kernel, a, lam, values[:, ::f], g) for f, g in zip(factors, grids)], axis=1
        )

    buf = run_replicates(plan, cfg, block)
    out = []
    for j, g in enumerate(grids):
        res = _residual_from(buf[:, 3 * j:3 * j + 3], a, lam, g, {"sampler": plan.describe()})
        _check_censoring(res, max_censored)
        out.append(res)
    return out


def ibp_residual(
    kernel: K.Kernel, t: float, t1: float, lam: float, lam1: float, cfg: McConfig, gl_order: int = 4
) -> Residual:
    """Integration by parts for ``F = exp(lam1 X_{t1})``.

    lhs averages ``F (M_t - 1) / lam``; rhs averages
    ``lam1 F int_0^t M_s dR/ds(s, t1) ds``.  The time integral is composite
    Gauss-Legendre over grid cells; ``t1`` must be a node, so the kink of
    ``dR/ds(., t1)`` always sits on a cell boundary.
    """
    if lam == 0:
        raise InvalidArgument("lambda must be nonzero")
    grid = cfg.grid
    it, i1 = grid.index_of(t), grid.index_of(t1)
    if it is None or i1 is None or it == 0 or i1 == 0:
        raise NodesMissing(f"t={t} and t1={t1} must be positive grid nodes of {grid.to_dict()}")
    dt = grid.dt
    x, w = np.polynomial.legendre.leggauss(gl_order)
    theta = 0.5 * (1.0 + x)
    s = (np.arange(it)[:, None] + theta[None, :]) * dt
    weight = (0.5 * dt) * w[None, :] * np.asarray(K.dcov_ds(kernel, s, t1))
    half_var = 0.5 * lam * lam * np.asarray(K.variance(kernel, s))
    v_t = float(K.variance(kernel, it * dt))
    plan = _plan(kernel, cfg)

    def block(values):
        f = np.exp(lam1 * values[:, i1])
        m_t = np.exp(lam * values[:, it] - 0.5 * lam * lam * v_t)
        left = values[:, :it, None]
        right = values[:, 1:it + 1, None]
        xs = left + theta * (right - left)
        integral = np.einsum("bcq,cq->b", np.exp(lam * xs - half_var), weight)
        return np.stack([f * (m_t - 1.0) / lam, lam1 * f * integral], axis=1)

    buf = run_replicates(plan, cfg, block)
    lhs, lhs_se = _mean_se(buf[:, 0])
    rhs, rhs_se = _mean_se(buf[:, 1])
    _, se = _mean_se(buf[:, 0] - buf[:, 1])
    ref = oracles.gaussian_mgf_ibp(kernel, it * dt, i1 * dt, lam, lam1)
    return Residual(
        lhs, rhs, se, lhs_se, rhs_se, cfg.replicates, 0, grid.n,
        {"oracle": ref.value, "formula_id": ref.formula_id, "sampler": plan.describe()},
    )


def _hit_times(kernel: K.Kernel, a: float, cfg: McConfig) -> np.ndarray:
    plan = _plan(kernel, cfg)
    dt = cfg.grid.dt
    return run_replicates(plan, cfg, lambda vals: first_hit_block(vals, dt, a)[1])


def negative_moment(kernel: K.Kernel, a: float, r: float, cfg: McConfig) -> Estimate:
    """``E V(tau_a)^-r``; unfinished paths contribute 0, bounded by ``V(t_max)^-r``."""
    _positive(a=a, r=r)
    tau = _hit_times(kernel, a, cfg)
    hit = np.isfinite(tau)
    v = np.asarray(K.variance(kernel, np.where(hit, tau, 1.0)))
    contrib = np.where(hit, v ** (-r), 0.0)
    mean, se = _mean_se(contrib)
    censored = (~hit).astype(float)
    bound = _censoring_bound(censored, float(K.variance(kernel, cfg.grid.t_max)) ** (-r))
    ref = oracles.neg_moment_bound(r, a)
    return Estimate(mean, se, cfg.replicates, int(censored.sum()), bound,
                    {"oracle": ref.value, "formula_id": ref.formula_id})


@dataclass
class HorizonStudy:
    r: float
    a: float
    horizons: list[float]
    estimates: list[Estimate]
    lower_bound: float | None

    @property
    def increasing(self) -> bool:
        m = [e.mean for e in self.estimates]
        return all(y > x for x, y in zip(m, m[1:]))

    @property
    def exceeds_lower(self) -> bool | None:
        if self.lower_bound is None:
            return None
        last = self.estimates[-1]
        return last.mean >= self.lower_bound - 3.0 * last.stderr

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "a": self.a,
            "horizons": self.horizons,
            "estimates": [e.to_dict() for e in self.estimates],
            "increasing": self.increasing,
            "lower_bound": self.lower_bound,
            "exceeds_lower": self.exceeds_lower,
        }


def positive_moment_divergence(kernel: K.Kernel, a: float, r: float, schedule, cfg: McConfig) -> HorizonStudy:
    """Truncated moments ``E min(V(tau_a), V(h))^r`` for each horizon ``h`` in ``schedule``.

    One path set on ``cfg.grid`` serves every horizon: ``min(tau_a, h)`` only
    needs the path up to ``h``, and the grid step is the same for all of them.
    """
    if not (0.0 < r < 1.0):
        raise InvalidArgument(f"r must lie in (0, 1), got {r}")
    _positive(a=a)
    horizons = [float(h) for h in schedule]
    if not horizons or any(h <= 0 for h in horizons) or any(y <= x for x, y in zip(horizons, horizons[1:])):
        raise InvalidArgument("schedule must be a nonempty increasing list of positive horizons")
    if horizons[-1] > cfg.grid.t_max * (1 + 1e-12):
        raise InvalidArgument(f"largest horizon {horizons[-1]} exceeds grid t_max {cfg.grid.t_max}")
    tau = _hit_times(kernel, a, cfg)
    estimates = []
    for h in horizons:
        capped = np.minimum(tau, h)
        contrib = np.asarray(K.variance(kernel, capped)) ** r
        mean, se = _mean_se(contrib)
        estimates.append(Estimate(mean, se, cfg.replicates, int(np.sum(tau > h)), 0.0, {"horizon": h}))
    lower = oracles.pos_moment_lower(r, a).value if r < 0.5 else None
    return HorizonStudy(r, a, horizons, estimates, lower)


@dataclass
class TailFit:
    slope: float
    slope_stderr: float
    intercept: float
    points: list[dict]
    dropped: list[float]
    censored_count: int

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "intercept": self.intercept,
            "points": self.points,
            "dropped": self.dropped,
            "censored": self.censored_count,
        }


MIN_SURVIVORS = 100


def tail_exponent(kernel: K.Kernel, a: float, t_probes, cfg: McConfig) -> TailFit:
    """Log-log least-squares slope of the survival function ``P(tau_a > t)``."""
    _positive(a=a)
    probes = np.asarray(t_probes, dtype=float)
    if probes.ndim != 1 or probes.size < 4 or np.any(np.diff(probes) <= 0):
        raise InvalidArgument("need at least 4 increasing probe times")
    if probes[0] <= 0 or probes[-1] > cfg.grid.t_max * (1 + 1e-12):
        raise InvalidArgument(f"probes must lie in (0, {cfg.grid.t_max}]")
    if probes[-1] / probes[0] < 100:
        raise InvalidArgument("probes must span at least two decades")
    tau = _hit_times(kernel, a, cfg)
    R = tau.shape[0]
    points, dropped = [], []
    for t in probes:
        alive = int(np.sum(tau > t))
        if alive < MIN_SURVIVORS:
            dropped.append(float(t))
            continue
        p = alive / R
        points.append({"t": float(t), "survival": p, "stderr": math.sqrt(p * (1 - p) / R), "survivors": alive})
    if len(points) < 4:
        raise TooFewProbes(f"only {len(points)} probes keep {MIN_SURVIVORS}+ surviving paths")
    fit = stats.linregress(np.log([p["t"] for p in points]), np.log([p["survival"] for p in points]))
    return TailFit(
        float(fit.slope), float(fit.stderr), float(fit.intercept), points, dropped,
        int(np.sum(~np.isfinite(tau))),
    )
