"""Fitting regularized polynomial functional regression of order ``p``.

The fitted regression has the representer form

    U(x) = b0 + sum_i b[i] * sum_{l=1}^p <X_i, x>**l

over the training curves ``X_i``.  Three paths produce the coefficients:

``fit_tikhonov_direct``
    assembles the full ``(pN+1)``-unknown Tikhonov system with separate
    coefficients ``b[k, i]`` for every degree ``k``;
``fit_tikhonov_reduced`` / ``fit_iterated``
    the ``(N+1)``-unknown system obtained from ``b[k, i] = b[1, i]``;
``fit_spectral``
    any :class:`~pfr.filters.FilterSpec` applied to the eigendecomposition of
    the feature kernel ``K/N`` with ``K[i, s] = sum_{l=0}^p c[i, s]**l``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as la

from .errors import InvalidArgumentError, ParseError, SolveError, UnsupportedVersionError
from .filters import FilterSpec, filter_value
from .funcdata import Curve, GramMatrix, Grid, gram, stack

__all__ = [
    "PfrModel",
    "FitReport",
    "KernelSpectrum",
    "fit_tikhonov_direct",
    "fit_tikhonov_reduced",
    "fit_spectral",
    "fit_iterated",
    "predict",
    "save_model",
    "load_model",
    "MODEL_VERSION",
]

MODEL_VERSION = 1
IDENTITY_TOL = 1e-8


def monomial_sum(c, p: int):
    """``c + c**2 + ... + c**p`` by Horner's rule."""
    acc = c
    for _ in range(p - 1):
        acc = c * (acc + 1.0)
    return acc


@dataclass(frozen=True, eq=False)
class PfrModel:
    """Fitted order-``p`` regression expanded over its training curves."""

    p: int
    b0: float
    b: np.ndarray
    curves: tuple
    gram: GramMatrix
    filter: FilterSpec | None = None

    def __post_init__(self):
        b = np.array(self.b, dtype=float).reshape(-1)
        if b.shape[0] != len(self.curves):
            raise InvalidArgumentError(
                f"{b.shape[0]} coefficients for {len(self.curves)} training curves"
            )
        b.flags.writeable = False
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "curves", tuple(self.curves))
        object.__setattr__(self, "b0", float(self.b0))

    @property
    def grid(self) -> Grid:
        return self.curves[0].grid

    @property
    def n(self) -> int:
        return len(self.curves)

    def values_matrix(self) -> np.ndarray:
        return np.vstack([c.values for c in self.curves])

    def predict_inner(self, inner: np.ndarray) -> np.ndarray:
        """Predictions from precomputed inner products, shape ``(M, N)``."""
        return self.b0 + monomial_sum(np.asarray(inner), self.p) @ self.b

    def predict_values(self, Z: np.ndarray) -> np.ndarray:
        """Predict for rows of ``Z`` sampled on the training grid."""
        Z = np.atleast_2d(Z)
        if Z.shape[1] != self.grid.n_points:
            raise InvalidArgumentError("curve values do not match the training grid")
        inner = (Z * self.grid.weights) @ self.values_matrix().T
        return self.predict_inner(inner)

    def predict(self, x: Curve) -> float:
        return predict(self, x)


@dataclass(frozen=True, eq=False)
class FitReport:
    model: PfrModel
    path: str
    residual_norm: float
    eigen_range: tuple[float, float] | None = None
    identity_gap: float | None = None


def _prepare(samples, responses, p):
    if int(p) != p or p < 1:
        raise InvalidArgumentError(f"polynomial order must be a positive integer, got {p}")
    samples = list(samples)
    grid, X = stack(samples)
    y = np.asarray(responses, dtype=float).reshape(-1)
    if y.shape[0] != len(samples):
        raise InvalidArgumentError(f"{len(samples)} samples but {y.shape[0]} responses")
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("responses must be finite")
    return samples, gram(samples), y


def _check_lambda(lam, allow_zero=False):
    ok = lam >= 0 if allow_zero else lam > 0
    if not (ok and np.isfinite(lam)):
        bound = "nonnegative" if allow_zero else "positive"
        raise InvalidArgumentError(f"lambda must be {bound} and finite, got {lam}")


def _tikhonov_or_none(lam):
    # lam = 0 is an unregularized solve, which no FilterSpec describes
    return FilterSpec.tikhonov(lam) if lam > 0 else None


def _factor(M):
    """LU factors of ``M``; numerically singular matrices raise :class:`SolveError`."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", la.LinAlgWarning)
            lu, piv = la.lu_factor(M)
    except (la.LinAlgError, la.LinAlgWarning, ValueError) as exc:
        raise SolveError(f"singular system: {exc}") from exc
    anorm = np.linalg.norm(M, 1)
    rcond, info = la.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or not rcond > np.finfo(float).eps:
        raise SolveError(f"system is numerically singular (reciprocal condition {rcond:.3e})")
    return lu, piv


def _lu_solve(lu, rhs):
    x = la.lu_solve(lu, rhs)
    if not np.all(np.isfinite(x)):
        raise SolveError("linear solve produced non-finite coefficients")
    return x


def _solve(M, rhs):
    return _lu_solve(_factor(M), rhs)


def fit_tikhonov_direct(samples: Sequence[Curve], responses, lam: float, p: int) -> FitReport:
    """Solve the full Tikhonov system in ``b0`` and ``b[k, i]``, ``k = 1..p``.

    Row 0 is ``(lam+1) b0 + (1/N) sum_i sum_l sum_s b[l,s] c[i,s]**l = mean(Y)``,
    row ``(k, i)`` is ``lam b[k,i] + b0/N + (1/N) sum_l sum_s b[l,s] c[i,s]**l = Y_i/N``.
    The solution must satisfy ``b[k, i] = b[1, i]`` and ``b0 = sum_i b[1, i]``;
    a :class:`SolveError` is raised when either fails beyond ``1e-8``.
    ``lam = 0`` is accepted and fails with :class:`SolveError` when singular.
    """
    _check_lambda(lam, allow_zero=True)
    samples, G, y = _prepare(samples, responses, p)
    N = len(samples)
    C = G.entries
    powers = [C**l for l in range(1, p + 1)]
    M = np.zeros((p * N + 1, p * N + 1))
    M[0, 0] = lam + 1.0
    for l, Cl in enumerate(powers):
        M[0, 1 + l * N:1 + (l + 1) * N] = Cl.sum(axis=0) / N
    for k in range(p):
        rows = slice(1 + k * N, 1 + (k + 1) * N)
        M[rows, 0] = 1.0 / N
        for l, Cl in enumerate(powers):
            M[rows, 1 + l * N:1 + (l + 1) * N] = Cl / N
        M[rows, rows] += lam * np.eye(N)
    rhs = np.concatenate([[y.mean()], np.tile(y / N, p)])
    x = _solve(M, rhs)

    b0, blocks = x[0], x[1:].reshape(p, N)
    b1 = blocks[0]
    gap_k = np.max(np.abs(blocks - b1)) / (1.0 + np.max(np.abs(b1)))
    gap_0 = abs(b0 - b1.sum()) / (1.0 + abs(b0))
    gap = float(max(gap_k, gap_0))
    if gap > IDENTITY_TOL:
        raise SolveError(
            f"coefficient identities violated (relative gap {gap:.3e}); system too ill-conditioned"
        )
    model = PfrModel(p, b0, b1.copy(), tuple(samples), G, _tikhonov_or_none(lam))
    return FitReport(model, "direct_full", float(np.linalg.norm(M @ x - rhs)), identity_gap=gap)


def _reduced_system(G: GramMatrix, lam: float, p: int):
    """``(N+1)``-unknown system in ``(b0, b)`` with row 0 in constraint form.

    The Tikhonov row 0, ``(lam+1) b0 + (1/N) sum_i sum_s (K-1)[i,s] b[s] = mean(Y)``,
    minus the sum of the other rows is ``lam (b0 - sum(b)) = 0``.  Storing that
    row divided by ``lam`` gives the same solution without the ``1/lam``
    conditioning the raw row carries.
    """
    N = G.size
    Km1 = G.kernel(p) - 1.0
    M = np.empty((N + 1, N + 1))
    M[0, 0] = 1.0
    M[0, 1:] = -1.0
    M[1:, 0] = 1.0 / N
    M[1:, 1:] = Km1 / N + lam * np.eye(N)
    return M


def _reduced_rhs(y):
    return np.concatenate([[0.0], y / len(y)])


def fit_tikhonov_reduced(samples: Sequence[Curve], responses, lam: float, p: int) -> FitReport:
    """Solve the ``(N+1)``-unknown Tikhonov system in ``(b0, b[1, :])``.

    With ``lam = 0`` this returns the interpolant ``K b = Y`` when ``K`` is
    nonsingular and raises :class:`SolveError` otherwise.
    """
    _check_lambda(lam, allow_zero=True)
    samples, G, y = _prepare(samples, responses, p)
    M = _reduced_system(G, lam, p)
    rhs = _reduced_rhs(y)
    x = _solve(M, rhs)
    model = PfrModel(p, x[0], x[1:], tuple(samples), G, _tikhonov_or_none(lam))
    return FitReport(model, "reduced", float(np.linalg.norm(M @ x - rhs)))


def fit_iterated(samples: Sequence[Curve], responses, lam: float, p: int, q: int) -> FitReport:
    """Iterated Tikhonov: ``q`` solves of the reduced system, starting from zero.

    Iterate ``j`` solves ``(lam I + [A*A]_N) u_j = lam u_{j-1} + [A*Y]_N``;
    the LU factorization is computed once.  The constraint row keeps a zero
    right-hand side since every iterate satisfies ``b0 = sum(b)``.
    """
    _check_lambda(lam)
    if int(q) != q or q < 1:
        raise InvalidArgumentError(f"number of iterations must be >= 1, got {q}")
    samples, G, y = _prepare(samples, responses, p)
    M = _reduced_system(G, lam, p)
    rhs = _reduced_rhs(y)
    lu = _factor(M)
    x = np.zeros_like(rhs)
    for _ in range(int(q)):
        step_rhs = rhs + lam * x
        step_rhs[0] = 0.0
        x = _lu_solve(lu, step_rhs)
    model = PfrModel(p, x[0], x[1:], tuple(samples), G, FilterSpec.iterated(lam, q))
    return FitReport(model, "reduced", float(np.linalg.norm(M @ x - step_rhs)))


class KernelSpectrum:
    """Eigendecomposition of ``K/N`` shared by every filter and response vector.

    Parameters
    ----------
    samples : sequence of Curve
    p : int
        Polynomial order.
    """

    def __init__(self, samples: Sequence[Curve], p: int):
        if int(p) != p or p < 1:
            raise InvalidArgumentError(f"polynomial order must be a positive integer, got {p}")
        self.samples = tuple(samples)
        stack(self.samples)
        self.p = int(p)
        self.gram = gram(self.samples)
        self.n = len(self.samples)
        self.kernel = self.gram.kernel(self.p)
        try:
            evals, evecs = np.linalg.eigh(self.kernel / self.n)
        except np.linalg.LinAlgError as exc:
            raise SolveError(f"eigendecomposition failed: {exc}") from exc
        self.eigenvalues = evals
        self.eigenvectors = evecs

    def null_threshold(self, rcond: float | None = None) -> float:
        if rcond is None:
            rcond = self.n * np.finfo(float).eps
        return rcond * max(np.max(np.abs(self.eigenvalues)), 0.0)

    def filter_diagonal(self, filt: FilterSpec, rcond: float | None = None) -> np.ndarray:
        """``g(sigma_j)`` for every eigenvalue, zero on the numerical null space.

        Eigenvalues at or below ``rcond * max|eigenvalue|`` (default
        ``rcond = N * eps``) are treated as the exact null space of ``K``: those
        directions contribute nothing to the fitted function, so their
        coefficients are dropped instead of being amplified by ``g(0) ~ 1/lambda``.
        ``rcond=0`` filters every eigenvalue (negative roundoff clamped to zero).
        """
        sigma = np.clip(self.eigenvalues, 0.0, None)
        g = filter_value(filt, sigma)
        if rcond is None or rcond > 0:
            g = np.where(self.eigenvalues > self.null_threshold(rcond), g, 0.0)
        return g

    def coefficients(self, filt: FilterSpec, responses, rcond: float | None = None) -> np.ndarray:
        """``beta = V g(Lambda) V^T (Y/N)``."""
        return self._solve(filt, responses, rcond)[0]

    def _solve(self, filt, responses, rcond):
        y = np.asarray(responses, dtype=float).reshape(-1)
        if y.shape[0] != self.n:
            raise InvalidArgumentError(f"{self.n} samples but {y.shape[0]} responses")
        g = self.filter_diagonal(filt, rcond)
        V = self.eigenvectors
        projected = g * (V.T @ (y / self.n))
        beta = V @ projected
        return beta, float(np.linalg.norm(V.T @ beta - projected))

    def fit(self, filt: FilterSpec, responses, rcond: float | None = None) -> FitReport:
        beta, resid = self._solve(filt, responses, rcond)
        model = PfrModel(self.p, beta.sum(), beta, self.samples, self.gram, filt)
        return FitReport(
            model,
            "spectral",
            resid,
            eigen_range=(float(self.eigenvalues[0]), float(self.eigenvalues[-1])),
        )


def fit_spectral(samples: Sequence[Curve], responses, filt: FilterSpec, p: int,
                 rcond: float | None = None) -> FitReport:
    """Fit with an arbitrary spectral filter; ``b0`` is set to ``sum(b)``."""
    if not isinstance(filt, FilterSpec):
        raise InvalidArgumentError("filt must be a FilterSpec")
    return KernelSpectrum(samples, p).fit(filt, responses, rcond)


def predict(model: PfrModel, x: Curve) -> float:
    if x.grid != model.grid:
        raise InvalidArgumentError(f"grid mismatch: {x.grid} vs training grid {model.grid}")
    return float(model.predict_values(x.values[None, :])[0])


# Serialization -----------------------------------------------------------------

def save_model(model: PfrModel) -> bytes:
    """JSON encoding; floats use the shortest repr that round-trips exactly."""
    doc = {
        "version": MODEL_VERSION,
        "p": model.p,
        "filter": None if model.filter is None else model.filter.to_dict(),
        "b0": model.b0,
        "b": model.b.tolist(),
        "grid": model.grid.to_dict(),
        "curves": [c.values.tolist() for c in model.curves],
    }
    return json.dumps(doc).encode("utf-8")


def _field(doc, name):
    try:
        return doc[name]
    except KeyError:
        raise ParseError(f"model file is missing field {name!r}") from None


def load_model(data) -> PfrModel:
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model JSON, line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError("model file must hold a JSON object")
    version = _field(doc, "version")
    if version != MODEL_VERSION:
        raise UnsupportedVersionError(
            f"model format version {version!r} is not supported (expected {MODEL_VERSION})"
        )
    try:
        grid = Grid.from_dict(_field(doc, "grid"))
        curves = tuple(Curve(grid, np.array(v, dtype=float)) for v in _field(doc, "curves"))
        filt = doc.get("filter")
        return PfrModel(
            p=int(_field(doc, "p")),
            b0=float(_field(doc, "b0")),
            b=np.array(_field(doc, "b"), dtype=float),
            curves=curves,
            gram=gram(curves),
            filter=None if filt is None else FilterSpec.from_dict(filt),
        )
    except ParseError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ParseError(f"invalid model file: {exc}") from exc
