"""Capacity and stability quantities computed on the empirical spectrum.

The normal operator of the population problem is not available, so every
quantity here is evaluated on the eigenvalues of ``K/N`` (which coincide with
the nonzero eigenvalues of the empirical normal operator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidArgumentError, NoRootError
from .funcdata import Curve, gram, kappa_tilde
from .groundtruth import TruthSpec
from .simulate import STREAM_PROBE, ProcessSpec, draw_process, responses_from_truth

__all__ = [
    "SpectrumView",
    "empirical_spectrum",
    "effective_dimension",
    "s_quantity",
    "upsilon",
    "xi_bound",
    "lambda_star",
    "excess_risk_mc",
    "rate_exponent",
    "fit_rate",
]


@dataclass(frozen=True, eq=False)
class SpectrumView:
    """Nonincreasing eigenvalues plus the feature-norm bound ``kappa_tilde``."""

    eigenvalues: np.ndarray
    kappa_tilde: float

    def __post_init__(self):
        ev = np.sort(np.asarray(self.eigenvalues, dtype=float).reshape(-1))[::-1]
        if ev.size and ev[-1] < -1e-12 * max(ev[0], 1.0):
            raise InvalidArgumentError(f"eigenvalue {ev[-1]} is negative beyond roundoff")
        ev = np.clip(ev, 0.0, None)
        ev.flags.writeable = False
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def sigma_max(self) -> float:
        return float(self.eigenvalues[0]) if self.eigenvalues.size else 0.0


def empirical_spectrum(samples: Sequence[Curve], p: int, kappa: float | None = None) -> SpectrumView:
    """Spectrum of ``K/N`` for the samples.

    ``kappa`` bounds the L2 norm of the curves; without it the largest observed
    L2 norm is used.
    """
    G = gram(samples)
    n = G.size
    if kappa is None:
        kappa = math.sqrt(max(float(np.max(np.diag(G.entries))), 0.0))
    ev = np.linalg.eigvalsh(G.kernel(p) / n)
    return SpectrumView(ev, kappa_tilde(kappa, p))


def effective_dimension(spec: SpectrumView, lam: float) -> float:
    if not lam > 0:
        raise InvalidArgumentError("lambda must be positive")
    s = spec.eigenvalues
    return float(np.sum(s / (lam + s)))


def s_quantity(n: int, lam: float, spec: SpectrumView) -> float:
    if n < 1:
        raise InvalidArgumentError("n must be at least 1")
    k = spec.kappa_tilde
    return 2.0 * k / math.sqrt(n) * (k / math.sqrt(n * lam) + math.sqrt(effective_dimension(spec, lam)))


def upsilon(n: int, lam: float, spec: SpectrumView) -> float:
    return (s_quantity(n, lam, spec) / math.sqrt(lam)) ** 2 + 1.0


def xi_bound(n: int, lam: float, delta: float, spec: SpectrumView) -> float:
    if not 0.0 < delta < 1.0:
        raise InvalidArgumentError(f"delta must lie in (0, 1), got {delta}")
    return 2.0 * ((s_quantity(n, lam, spec) * math.log(2.0 / delta) / math.sqrt(lam)) ** 2 + 1.0)


def lambda_star(spec: SpectrumView, n: int) -> float:
    """Root of ``N(lambda)/lambda = n``.

    ``N(lambda)/lambda`` decreases from infinity to zero, so the root is unique.
    It is bracketed in log-space starting from ``[1e-16, sigma_max]``; the upper
    end is doubled until it brackets.
    """
    if n < 1:
        raise InvalidArgumentError("n must be at least 1")
    if spec.sigma_max <= 0.0:
        raise NoRootError("spectrum has no positive eigenvalue")

    def h(log_lam):
        lam = math.exp(log_lam)
        return math.log(effective_dimension(spec, lam) / lam) - math.log(n)

    lo, hi = math.log(1e-16), math.log(spec.sigma_max)
    while h(lo) < 0.0:
        lo -= math.log(1e4)
        if lo < -745:
            raise NoRootError("root lies below the representable range")
    while h(hi) > 0.0:
        hi += math.log(2.0)
    root = math.exp(brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))
    return root


def excess_risk_mc(model, truth: TruthSpec, process: ProcessSpec, n_mc: int, seed: int,
                   stream: int = STREAM_PROBE) -> float:
    """Monte Carlo mean of ``(U_truth(x) - U_fit(x))**2`` over fresh curves."""
    if n_mc < 1:
        raise InvalidArgumentError("n_mc must be at least 1")
    if process.grid != model.grid:
        raise InvalidArgumentError("process grid differs from the model's training grid")
    curves, _ = draw_process(process, n_mc, seed, stream=stream)
    Z = np.vstack([c.values for c in curves])
    diff = responses_from_truth(truth, process.grid, Z) - model.predict_values(Z)
    return float(np.mean(diff**2))


def rate_exponent(r: float, theta: float) -> tuple[float, float, float]:
    """Exponents of ``N`` for (lambda, excess risk, L2 error) under a power source condition.

    With ``lambda = N**(-1/(2r+theta+1))`` the risk decays like
    ``N**(-(2r+1)/(2r+theta+1))`` and the L2 error like ``N**(-r/(2r+theta+1))``.
    """
    if not 0.0 <= r <= 1.0:
        raise InvalidArgumentError(f"r must lie in [0, 1], got {r}")
    if not theta >= 0.0:
        raise InvalidArgumentError(f"theta must be nonnegative, got {theta}")
    d = 2.0 * r + theta + 1.0
    return (-1.0 / d, -(2.0 * r + 1.0) / d, -r / d)


def fit_rate(ns, errors) -> tuple[float, float]:
    """Least-squares slope and intercept of ``log(error)`` against ``log(N)``."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = (ns > 0) & (errors > 0) & np.isfinite(errors)
    if keep.sum() < 2:
        raise InvalidArgumentError("need at least two positive points to fit a rate")
    slope, intercept = np.polyfit(np.log(ns[keep]), np.log(errors[keep]), 1)
    return float(slope), float(intercept)
