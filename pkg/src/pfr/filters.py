"""Spectral regularization filters ``g_lambda`` and their residuals.

A filter maps an eigenvalue ``sigma`` of the (empirical) normal operator to
an approximation of ``1/sigma``.  The residual is ``r(sigma) = 1 - sigma*g(sigma)``.
All functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ParseError

__all__ = [
    "SCHEMES",
    "FilterSpec",
    "QualificationReport",
    "filter_value",
    "residual_value",
    "check_qualification",
]

SCHEMES = ("tikhonov", "iterated_tikhonov", "tsvd", "landweber")

_TINY = 1e-300


@dataclass(frozen=True)
class FilterSpec:
    """One-parameter regularization scheme.

    ``iterations`` is the number of Tikhonov iterations for
    ``iterated_tikhonov`` and the step count for ``landweber``; ``step_size``
    is only used by ``landweber`` and must satisfy ``step_size*sigma_max < 1``.
    """

    scheme: str = "tikhonov"
    lam: float = 1e-3
    iterations: int = 1
    step_size: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise InvalidArgumentError(f"lambda must be positive and finite, got {self.lam}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise InvalidArgumentError(f"iterations must be a positive integer, got {self.iterations}")
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "iterations", int(self.iterations))
        if self.scheme == "landweber":
            if self.step_size is None or not self.step_size > 0:
                raise InvalidArgumentError("landweber needs a positive step_size")
            object.__setattr__(self, "step_size", float(self.step_size))

    @classmethod
    def tikhonov(cls, lam: float) -> "FilterSpec":
        return cls("tikhonov", lam)

    @classmethod
    def iterated(cls, lam: float, iterations: int) -> "FilterSpec":
        return cls("iterated_tikhonov", lam, iterations)

    @property
    def qualification(self) -> float:
        """Nominal qualification of the scheme (``inf`` for TSVD)."""
        if self.scheme == "tikhonov":
            return 1.0
        if self.scheme == "tsvd":
            return float("inf")
        return float(self.iterations)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "lambda": self.lam,
            "iterations": self.iterations,
            "step_size": self.step_size,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "FilterSpec":
        if not isinstance(d, dict):
            raise ParseError(f"filter must be a JSON object, got {type(d).__name__}")
        unknown = set(d) - {"scheme", "lambda", "iterations", "step_size"}
        if unknown:
            raise ParseError(f"unknown filter fields: {sorted(unknown)}")
        try:
            return cls(
                scheme=d.get("scheme", "tikhonov"),
                lam=float(d["lambda"]),
                iterations=int(d.get("iterations", 1)),
                step_size=None if d.get("step_size") is None else float(d["step_size"]),
            )
        except KeyError as exc:
            raise ParseError(f"filter is missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad filter: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "FilterSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"filter JSON, line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _as_sigma(sigma):
    s = np.asarray(sigma, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise InvalidArgumentError("sigma must be nonnegative")
    return s


def _unwrap(out, sigma):
    return float(out) if np.ndim(sigma) == 0 else out


def filter_value(spec: FilterSpec, sigma):
    """Evaluate ``g_lambda(sigma)``."""
    s = _as_sigma(sigma)
    lam = spec.lam
    if spec.scheme == "tikhonov" or (spec.scheme == "iterated_tikhonov" and spec.iterations == 1):
        out = 1.0 / (s + lam)
    elif spec.scheme == "iterated_tikhonov":
        q = spec.iterations
        with np.errstate(divide="ignore", invalid="ignore"):
            # (1 - (lam/(lam+s))**q) / s, written to stay accurate for s << lam
            out = -np.expm1(-q * np.log1p(s / lam)) / s
        out = np.where(s < _TINY, q / lam, out)
    elif spec.scheme == "tsvd":
        with np.errstate(divide="ignore"):
            out = np.where(s >= lam, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    else:
        a, m = spec.step_size, spec.iterations
        with np.errstate(divide="ignore", invalid="ignore"):
            small = a * s < 1.0
            stable = -np.expm1(m * np.log1p(np.where(small, -a * s, 0.0))) / s
            direct = (1.0 - (1.0 - a * s) ** m) / s
            out = np.where(small, stable, direct)
        out = np.where(s < _TINY, m * a, out)
    return _unwrap(out, sigma)


def residual_value(spec: FilterSpec, sigma):
    """Evaluate ``r_lambda(sigma) = 1 - sigma*g_lambda(sigma)``.

    Closed forms are used so that the value stays accurate when it is tiny,
    which matters for qualification estimates ``r(sigma)*sigma**q/lambda**q``.
    """
    s = _as_sigma(sigma)
    lam = spec.lam
    if spec.scheme == "tikhonov" or (spec.scheme == "iterated_tikhonov" and spec.iterations == 1):
        out = lam / (s + lam)
    elif spec.scheme == "iterated_tikhonov":
        out = np.exp(-spec.iterations * np.log1p(s / lam))
    elif spec.scheme == "tsvd":
        out = np.where(s >= lam, 0.0, 1.0)
    else:
        a, m = spec.step_size, spec.iterations
        small = a * s < 1.0
        out = np.where(small, np.exp(m * np.log1p(np.where(small, -a * s, 0.0))), (1.0 - a * s) ** m)
    return _unwrap(out, sigma)


@dataclass(frozen=True)
class QualificationReport:
    """Observed sup-constants of a filter over a probe grid."""

    q: float
    gamma_q: float
    gamma_0: float
    gamma_minus1: float
    gamma_minus_half: float

    def qualified(self, bound: float = 1.0, rtol: float = 1e-12) -> bool:
        """True when ``gamma_q`` does not exceed ``bound`` (up to ``rtol``)."""
        return self.gamma_q <= bound * (1.0 + rtol)


def check_qualification(spec: FilterSpec, q: float, sigma_max: float,
                        n_probe: int = 10_000) -> QualificationReport:
    """Probe the filter on a log-spaced grid of ``(0, sigma_max]``."""
    if not q > 0:
        raise InvalidArgumentError("q must be positive")
    if not sigma_max > 0:
        raise InvalidArgumentError("sigma_max must be positive")
    if n_probe < 100:
        raise InvalidArgumentError("n_probe must be at least 100")
    lam = spec.lam
    sigma = np.geomspace(sigma_max * 1e-14, sigma_max, n_probe)
    g = np.abs(filter_value(spec, sigma))
    r = np.abs(residual_value(spec, sigma))
    # (sigma/lam)**q overflows only for absurd q; keep it in log space anyway
    scaled = np.exp(np.log(r, where=r > 0, out=np.full_like(r, -np.inf)) + q * np.log(sigma / lam))
    return QualificationReport(
        q=float(q),
        gamma_q=float(np.max(scaled)),
        gamma_0=float(np.max(r)),
        gamma_minus1=float(lam * np.max(g)),
        gamma_minus_half=float(np.max(np.sqrt(lam * sigma) * g)),
    )
