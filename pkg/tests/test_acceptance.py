"""Acceptance criteria AC-1 .. AC-10 at their stated tolerances.

Each check records one ``AC-k PASS|FAIL`` line, printed in the pytest
terminal summary (or directly when the file is run as a script).  All runs
use master seed 12345; the configurations were fixed before the first run.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from gphit import estimators as E
from gphit import kernels as K
from gphit import oracles as O
from gphit import simulate as S

SEED = 12345
RESULTS: dict[str, str] = {}

pytestmark = pytest.mark.slow


def cfg(t_max, n, reps, workers=1, method=None):
    return E.McConfig(reps, SEED, S.Grid(t_max, n), workers, method)


def record(name, ok, detail, started):
    RESULTS[name] = f"{name} {'PASS' if ok else 'FAIL'} ({time.time() - started:.0f}s): {detail}"
    assert ok, RESULTS[name]


def test_ac1_bm_laplace():
    t0 = time.time()
    est = E.laplace_hitting(K.brownian(), 1.0, 1.0, cfg(10.0, 2**14, 100_000))
    ref = O.bm_laplace(1.0, 1.0).value
    ok_mean = abs(est.mean - ref) <= 3 * est.stderr + 0.02
    ok_trunc = est.truncation_bound < 1e-4
    # generic sampler on a coarser grid must agree with the increment sampler on the same grid
    gen = E.laplace_hitting(K.brownian(), 1.0, 1.0, cfg(10.0, 2**10, 10_000, method="cholesky"))
    inc = E.laplace_hitting(K.brownian(), 1.0, 1.0, cfg(10.0, 2**10, 10_000))
    ok_gen = abs(gen.mean - inc.mean) <= 3 * math.hypot(gen.stderr, inc.stderr)
    record(
        "AC-1", ok_mean and ok_trunc and ok_gen,
        f"mean={est.mean:.5f} se={est.stderr:.5f} ref={ref:.6f} |diff|={abs(est.mean - ref):.4f} "
        f"<= {3 * est.stderr + 0.02:.4f}; truncation={est.truncation_bound:.2e}; "
        f"n=2^10 cholesky {gen.mean:.4f} vs increments {inc.mean:.4f}",
        t0,
    )


def test_ac2_linear_closed_form():
    t0 = time.time()
    est = E.laplace_hitting(K.linear(), 1.0, 1.0, cfg(10.0, 2, 1_000_000))
    ref = O.h1_laplace(1.0, 1.0).value
    ok = abs(est.mean - ref) <= 3 * est.stderr
    record("AC-2", ok, f"mean={est.mean:.6f} se={est.stderr:.6f} ref={ref:.6f}", t0)


def test_ac3_fbm_domination():
    t0 = time.time()
    cells = E.laplace_cells(K.fbm(0.7), [0.5, 1.0], [0.5, 1.0, 2.0], cfg(10.0, 2**14, 10_000, method="circulant"))
    parts, ok = [], True
    for (a, alpha), est in cells.items():
        bound = O.bm_laplace(a, alpha).value
        good = est.mean - 3 * est.stderr <= bound
        ok &= good
        parts.append(f"({a:g},{alpha:g}) {est.mean:.4f}-3*{est.stderr:.4f}<={bound:.4f}")
    record("AC-3", ok, "; ".join(parts), t0)


def test_ac4_theorem34_refinement():
    t0 = time.time()
    levels = E.theorem34_refinement(K.fbm(0.75), 0.5, 1.0, cfg(10.0, 2**14, 10_000), factors=(16, 4, 1))
    fine = levels[-1]
    parts, ok = [], True
    for lv in levels:
        # bias(n): mean shift of the residual against the finest grid, from the shared paths
        bias = abs(lv.residual - fine.residual)
        good = abs(lv.residual) <= 3 * lv.stderr + bias
        ok &= good
        parts.append(f"n={lv.grid_n}: res={lv.residual:+.2e} se={lv.stderr:.1e} bias={bias:.1e}")
    mags = [abs(lv.residual) for lv in levels]
    monotone = all(y <= x for x, y in zip(mags, mags[1:]))
    parts.append(f"|res| nonincreasing={monotone}")
    record("AC-4", ok and monotone, "; ".join(parts), t0)


def test_ac5_ibp():
    t0 = time.time()
    r = E.ibp_residual(K.fbm(0.75), 1.0, 0.5, 0.8, 0.5, cfg(1.0, 2**12, 100_000))
    ref = r.extra["oracle"]
    ok_l = abs(r.lhs - ref) <= 3 * r.lhs_stderr
    ok_r = abs(r.rhs - ref) <= 3 * r.rhs_stderr
    ok_d = abs(r.residual) <= 3 * r.stderr
    record(
        "AC-5", ok_l and ok_r and ok_d,
        f"lhs={r.lhs:.5f}+-{r.lhs_stderr:.5f} rhs={r.rhs:.5f}+-{r.rhs_stderr:.5f} ref={ref:.7f} "
        f"lhs-rhs={r.residual:+.2e}+-{r.stderr:.1e}",
        t0,
    )


def test_ac6_negative_moment():
    t0 = time.time()
    bm = E.negative_moment(K.brownian(), 1.0, 1.0, cfg(10.0, 2**16, 10_000))
    fb = E.negative_moment(K.fbm(0.7), 1.0, 1.0, cfg(10.0, 2**14, 10_000))
    bound = O.neg_moment_bound(1.0, 1.0).value
    ok_bm = abs(bm.mean - 1.0) <= 3 * bm.stderr + 0.05
    ok_fb = fb.mean - 3 * fb.stderr <= bound
    record(
        "AC-6", ok_bm and ok_fb,
        f"BM mean={bm.mean:.4f} se={bm.stderr:.4f} (target 1, tol {3 * bm.stderr + 0.05:.4f}); "
        f"fBm(0.7) mean={fb.mean:.4f} se={fb.stderr:.4f} bound={bound:g}",
        t0,
    )


def test_ac7_positive_moment_divergence():
    t0 = time.time()
    study = E.positive_moment_divergence(K.fbm(0.7), 1.0, 0.5, [10.0, 100.0, 1000.0], cfg(1000.0, 2**17, 10_000))
    means = " < ".join(f"{e.mean:.4f}" for e in study.estimates)
    record("AC-7", study.increasing, f"truncated E V^0.5 at t_max 10, 100, 1000: {means}", t0)


def test_ac8_molchan_tail():
    t0 = time.time()
    probes = list(np.logspace(1, 3, 7))
    bm = E.tail_exponent(K.fbm(0.5), 1.0, probes, cfg(1000.0, 2**17, 10_000, method="increments"))
    fb = E.tail_exponent(K.fbm(0.6), 1.0, probes, cfg(1000.0, 2**17, 10_000))
    ok_bm = -0.6 <= bm.slope <= -0.4
    ok_fb = -0.5 <= fb.slope <= -0.3
    record(
        "AC-8", ok_bm and ok_fb,
        f"H=0.5 slope={bm.slope:.3f}+-{bm.slope_stderr:.3f} in [-0.6,-0.4]; "
        f"H=0.6 slope={fb.slope:.3f}+-{fb.slope_stderr:.3f} in [-0.5,-0.3]",
        t0,
    )


def _cholesky_exactness(kernel, reps=100_000):
    grid = S.Grid(1.0, 8)
    x = S.sample_block(S.plan_cholesky(kernel, grid), SEED, np.arange(reps))[:, 1:]
    sigma = S.covariance_matrix(kernel, grid)
    d = np.diag(sigma)
    mean_ok = bool(np.all(np.abs(x.mean(axis=0)) <= 4 * np.sqrt(d / reps)))
    se = np.sqrt((np.outer(d, d) + sigma**2) / reps)
    z = float(np.max(np.abs(x.T @ x / reps - sigma) / se))
    return mean_ok, z


def _ks(kernel, reps=10_000):
    grid = S.Grid(1.0, 1024)
    a = S.sample_block(S.plan_circulant(kernel, grid), SEED, np.arange(reps))[:, -1]
    b = S.sample_block(S.plan_cholesky(kernel, grid), SEED + 1, np.arange(reps))[:, -1]
    return stats.ks_2samp(a, b).statistic


def test_ac9_sampler_exactness():
    t0 = time.time()
    # two-sample KS critical value at level 1e-3 for n = m = 10^4
    crit = math.sqrt(-0.5 * math.log(1e-3 / 2)) * math.sqrt(2 / 10_000)
    parts, ok = [], True
    for kernel in (K.fbm(0.75), K.fbm(0.3), K.brownian()):
        mean_ok, z = _cholesky_exactness(kernel)
        ok &= mean_ok and z <= 4
        parts.append(f"{kernel.label()} cholesky n=8 mean_ok={mean_ok} max|z_cov|={z:.2f}")
    for kernel in (K.fbm(0.75), K.fbm(0.3)):
        d = _ks(kernel)
        ok &= d <= crit
        parts.append(f"{kernel.label()} circulant n=1024 KS={d:.4f}<={crit:.4f}")
    record("AC-9", ok, "; ".join(parts), t0)


def test_ac10_worker_determinism(monkeypatch):
    t0 = time.time()
    # smaller blocks so a modest run is split across several workers
    monkeypatch.setattr(S, "_BLOCK_NORMALS", 1 << 16)
    k = K.fbm(0.75)
    runs = {
        "laplace": lambda c: [e.to_dict() for e in E.laplace_cells(k, [0.5, 1], [0.5, 2], c).values()],
        "theorem34": lambda c: E.theorem34_residual(k, 0.5, 1.0, c).to_dict(),
        "ibp": lambda c: E.ibp_residual(k, 1.0, 0.5, 0.8, 0.5, c).to_dict(),
        "negative": lambda c: E.negative_moment(k, 1.0, 1.0, c).to_dict(),
        "positive": lambda c: E.positive_moment_divergence(k, 0.5, 0.5, [0.5, 1.0], c).to_dict(),
        "tail": lambda c: E.tail_exponent(k, 0.05, [0.01, 0.03, 0.1, 0.3, 1.0], c).to_dict(),
    }
    bad = []
    for name, fn in runs.items():
        outs = [fn(cfg(1.0, 1024, 1000, workers=w)) for w in (1, 2, 8)]
        if not (outs[0] == outs[1] == outs[2]):
            bad.append(name)
    record("AC-10", not bad, f"estimators {', '.join(runs)} identical for workers 1, 2, 8"
           if not bad else f"mismatch in {bad}", t0)


if __name__ == "__main__":
    import sys

    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
