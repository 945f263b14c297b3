"""Closed-form reference values for hitting-time functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate

from . import kernels as K
from .errors import DivergenceRegime, InvalidArgument

FORMULAS = ("eq1.2", "eq3.14", "remark3.6", "eq3.12-bound", "eq3.13-lower", "prop2.1-mgf")

# Lanczos approximation, g = 7, nine terms (Godfrey's coefficients)
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


@dataclass(frozen=True)
class OracleValue:
    value: float
    formula_id: str

    def __post_init__(self):
        if self.formula_id not in FORMULAS:
            raise InvalidArgument(f"unknown formula id {self.formula_id!r}")
        if not math.isfinite(self.value):
            raise InvalidArgument(f"oracle value {self.value} is not finite")

    def __float__(self):
        return self.value


def gamma(x: float) -> float:
    if x <= 0 and x == int(x):
        raise InvalidArgument(f"gamma has a pole at {x}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS[0]
    for i, c in enumerate(_LANCZOS[1:], start=1):
        acc += c / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


def _positive(**kw):
    for name, val in kw.items():
        if not (math.isfinite(val) and val > 0):
            raise InvalidArgument(f"{name} must be positive, got {val}")


def bm_laplace(a: float, alpha: float) -> OracleValue:
    """``E exp(-alpha tau_a)`` for standard Brownian motion."""
    _positive(a=a, alpha=alpha)
    return OracleValue(math.exp(-a * math.sqrt(2.0 * alpha)), "eq1.2")


def h1_laplace(a: float, alpha: float) -> OracleValue:
    """``E exp(-alpha tau_a^2)`` for ``X_t = Y t``; half the paths never hit."""
    return OracleValue(0.5 * bm_laplace(a, alpha).value, "eq3.14")


def indep_incr_laplace(a: float, lam: float) -> OracleValue:
    """``E exp(-lam^2 V(tau_a) / 2)`` for processes with independent increments."""
    _positive(a=a, lam=lam)
    return OracleValue(math.exp(-lam * a), "remark3.6")


def domination_bound(a: float, alpha: float) -> OracleValue:
    """Upper bound on ``E exp(-alpha V(tau_a))`` when ``dR/ds >= 0``; the Brownian value."""
    return bm_laplace(a, alpha)


def neg_moment_bound(r: float, a: float) -> OracleValue:
    """Upper bound on ``E V(tau_a)^-r``: ``2^r Gamma(r + 1/2) / sqrt(pi) * a^(-2r)``."""
    _positive(r=r, a=a)
    return OracleValue(2.0**r * gamma(r + 0.5) / math.sqrt(math.pi) * a ** (-2.0 * r), "eq3.12-bound")


def pos_moment_lower(r: float, a: float) -> OracleValue:
    """Lower bound on ``E V(tau_a)^r`` for ``0 < r < 1/2``.

    Evaluates ``r / Gamma(1-r) * int_0^inf (1 - exp(-a sqrt(2 alpha))) alpha^(-r-1) d alpha``
    after the substitution ``u = a sqrt(2 alpha)``, which turns it into
    ``2^(r+1) a^(2r) r / Gamma(1-r) * int_0^inf (1 - e^-u) u^(-2r-1) du``.
    For ``r >= 1/2`` the bound is infinite and :class:`DivergenceRegime` is raised.
    """
    _positive(r=r, a=a)
    if r >= 1.0:
        raise InvalidArgument(f"r must lie in (0, 1), got {r}")
    if r >= 0.5:
        raise DivergenceRegime(f"lower bound is infinite for r={r} >= 1/2")

    def f(u):
        return -math.expm1(-u) * u ** (-2.0 * r - 1.0)

    head, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=1e-11, limit=200)
    tail, _ = integrate.quad(f, 1.0, math.inf, epsabs=0.0, epsrel=1e-11, limit=200)
    value = 2.0 ** (r + 1.0) * a ** (2.0 * r) * r / gamma(1.0 - r) * (head + tail)
    return OracleValue(value, "eq3.13-lower")


def gaussian_mgf_ibp(kernel: K.Kernel, t: float, t1: float, lam: float, lam1: float) -> OracleValue:
    """``E[F (M_t - 1)] / lam`` for ``F = exp(lam1 X_{t1})``, by the Gaussian MGF."""
    if lam == 0:
        raise InvalidArgument("lambda must be nonzero")
    r11 = float(K.cov(kernel, t1, t1))
    r_t = float(K.cov(kernel, t, t1))
    value = math.exp(0.5 * lam1 * lam1 * r11) * math.expm1(lam * lam1 * r_t) / lam
    return OracleValue(value, "prop2.1-mgf")
