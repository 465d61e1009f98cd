"""Sampled curves on uniform grids and their L2 geometry.

Every L2 quantity in the package is a composite-trapezoid approximation on a
uniform grid of ``[t_start, t_end]``.  For the periodic cosine curves used in
the experiments the rule is exact up to roundoff.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError, ParseError

__all__ = [
    "Grid",
    "Curve",
    "GramMatrix",
    "DEFAULT_GRID",
    "l2_inner",
    "l2_norm",
    "gram",
    "poly_kernel",
    "kappa_tilde",
    "stack",
    "cosine",
    "curve_from_function",
    "write_curves",
    "read_curves",
]

MIN_POINTS = 8


@dataclass(frozen=True)
class Grid:
    """Equispaced nodes ``t_j = t_start + j*h`` on ``[t_start, t_end]``."""

    t_start: float = 0.0
    t_end: float = 2.0 * math.pi
    n_points: int = 2048

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise InvalidArgumentError("grid endpoints must be finite")
        if not self.t_end > self.t_start:
            raise InvalidArgumentError(
                f"t_end ({self.t_end}) must exceed t_start ({self.t_start})"
            )
        if int(self.n_points) != self.n_points or self.n_points < MIN_POINTS:
            raise InvalidArgumentError(
                f"n_points must be an integer >= {MIN_POINTS}, got {self.n_points}"
            )
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def length(self) -> float:
        return self.t_end - self.t_start

    @property
    def step(self) -> float:
        return self.length / (self.n_points - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        t = self.t_start + self.step * np.arange(self.n_points)
        t.flags.writeable = False
        return t

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite trapezoid weights; ``weights @ f`` integrates ``f``."""
        w = np.full(self.n_points, self.step)
        w[0] = w[-1] = 0.5 * self.step
        w.flags.writeable = False
        return w

    def to_dict(self) -> dict:
        return {"t_start": self.t_start, "t_end": self.t_end, "n_points": self.n_points}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(float(d["t_start"]), float(d["t_end"]), int(d["n_points"]))


DEFAULT_GRID = Grid()


@dataclass(frozen=True, eq=False)
class Curve:
    """Values of one function on a grid.

    Parameters
    ----------
    grid : Grid
    values : array_like, shape (grid.n_points,)
    kappa : float, optional
        Declared uniform bound; when given, ``max |values| <= kappa`` is checked.
    """

    grid: Grid
    values: np.ndarray
    kappa: float | None = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise InvalidArgumentError(
                f"expected {self.grid.n_points} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("curve values must be finite")
        if self.kappa is not None and np.max(np.abs(v)) > self.kappa:
            raise InvalidArgumentError(
                f"sup-norm {np.max(np.abs(v))} exceeds declared bound {self.kappa}"
            )
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def _check_same_grid(a: Curve, b: Curve) -> None:
    if a.grid != b.grid:
        raise InvalidArgumentError(f"grid mismatch: {a.grid} vs {b.grid}")


def l2_inner(a: Curve, b: Curve) -> float:
    """Trapezoidal approximation of the L2 inner product of two curves."""
    _check_same_grid(a, b)
    return float(np.dot(a.grid.weights, a.values * b.values))


def l2_norm(a: Curve) -> float:
    """``sqrt(l2_inner(a, a))``, scaled so tiny or huge curves neither underflow nor overflow."""
    scale = float(np.max(np.abs(a.values)))
    if scale == 0.0:
        return 0.0
    v = a.values / scale
    return scale * math.sqrt(float(np.dot(a.grid.weights, v * v)))


def stack(curves: Sequence[Curve]) -> tuple[Grid, np.ndarray]:
    """Return the shared grid and an ``(N, n_points)`` matrix of values."""
    if len(curves) == 0:
        raise InvalidArgumentError("need at least one curve")
    grid = curves[0].grid
    for c in curves[1:]:
        if c.grid != grid:
            raise InvalidArgumentError(f"grid mismatch: {grid} vs {c.grid}")
    return grid, np.vstack([c.values for c in curves])


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Symmetric matrix of pairwise L2 inner products ``c[i, s]``."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise InvalidArgumentError(f"Gram matrix must be square, got {e.shape}")
        if not np.array_equal(e, e.T):
            raise InvalidArgumentError("Gram matrix must be exactly symmetric")
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def kernel(self, p: int) -> np.ndarray:
        """Feature kernel ``K[i, s] = sum_{l=0}^p c[i, s]**l``."""
        return poly_kernel(self.entries, p)

    def is_psd(self, rtol: float = 1e-8) -> bool:
        ev = np.linalg.eigvalsh(self.entries)
        return bool(ev[0] >= -rtol * max(ev[-1], 0.0))


def gram(samples: Sequence[Curve]) -> GramMatrix:
    """Gram matrix of the samples; the upper triangle is mirrored."""
    grid, X = stack(samples)
    full = (X * grid.weights) @ X.T
    upper = np.triu(full)
    return GramMatrix(upper + np.triu(full, 1).T)


def poly_kernel(c, p: int):
    """``sum_{l=0}^p c**l`` by Horner's rule; works elementwise on arrays."""
    if p < 1:
        raise InvalidArgumentError(f"polynomial order must be >= 1, got {p}")
    acc = np.ones_like(c, dtype=float) if isinstance(c, np.ndarray) else 1.0
    for _ in range(p):
        acc = acc * c + 1.0
    return acc


def kappa_tilde(kappa: float, p: int) -> float:
    """Bound on the feature-vector norm given an L2 bound ``kappa`` on the curves."""
    return float(sum(kappa**l for l in range(p + 1)))


def cosine(grid: Grid, k: int) -> Curve:
    return Curve(grid, np.cos(k * grid.nodes))


def curve_from_function(grid: Grid, f: Callable[[np.ndarray], np.ndarray]) -> Curve:
    return Curve(grid, np.broadcast_to(f(grid.nodes), (grid.n_points,)))


# Curve-set CSV ---------------------------------------------------------------

def write_curves(path, curves: Sequence[Curve]) -> None:
    """Write curves as CSV: a ``# grid,t_start,t_end,n_points`` line, then one row per curve."""
    grid, X = stack(curves)
    with open(path, "w", newline="") as fh:
        fh.write(f"# grid,{grid.t_start!r},{grid.t_end!r},{grid.n_points}\n")
        for row in X:
            fh.write(",".join(format(v, ".17g") for v in row))
            fh.write("\n")


def read_curves(path) -> list[Curve]:
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        parts = [s.strip() for s in header.split(",")]
        if len(parts) != 4 or parts[0].lstrip("#").strip() != "grid":
            raise ParseError(f"{path}:1: expected '# grid,t_start,t_end,n_points' header")
        try:
            grid = Grid(float(parts[1]), float(parts[2]), int(parts[3]))
        except (ValueError, InvalidArgumentError) as exc:
            raise ParseError(f"{path}:1: bad grid header: {exc}") from exc
        curves = []
        for lineno, row in enumerate(csv.reader(fh), start=2):
            if not row:
                continue
            if len(row) != grid.n_points:
                raise ParseError(
                    f"{path}:{lineno}: expected {grid.n_points} columns, got {len(row)}"
                )
            try:
                curves.append(Curve(grid, np.array([float(v) for v in row])))
            except (ValueError, InvalidArgumentError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return curves
