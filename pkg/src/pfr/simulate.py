"""Synthetic functional data: random cosine processes, responses and label noise.

Random numbers come from a Philox counter-based generator keyed by
``(seed, stream)``.  Sample ``i`` always consumes the same counter positions,
so a dataset of size ``n`` is a prefix of every larger dataset drawn with the
same seed.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .funcdata import DEFAULT_GRID, Curve, Grid, write_curves
from .groundtruth import TruthSpec, tensor_inner, cosine_projections

__all__ = [
    "ProcessSpec",
    "NoiseSpec",
    "Dataset",
    "rng_stream",
    "draw_process",
    "response_oracle",
    "response_from_truth",
    "responses_from_truth",
    "add_noise",
    "make_dataset",
    "write_dataset",
    "STREAM_PROCESS",
    "STREAM_NOISE",
    "STREAM_PROBE",
]

STREAM_PROCESS = 0
STREAM_NOISE = 1
STREAM_PROBE = 2

_U64 = 2**64


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    """Deterministic generator for one ``(seed, stream)`` pair."""
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise InvalidArgumentError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=[seed, int(stream)]))


@dataclass(frozen=True)
class ProcessSpec:
    """``X(t) = sum_{k=0}^K xi_k cos(k t)`` with ``xi_k ~ U[-bound, bound]``."""

    max_frequency: int = 5
    coefficient_bound: float = 1.0
    grid: Grid = field(default_factory=lambda: DEFAULT_GRID)

    def __post_init__(self):
        if int(self.max_frequency) != self.max_frequency or self.max_frequency < 0:
            raise InvalidArgumentError("max_frequency must be a nonnegative integer")
        if not self.coefficient_bound > 0:
            raise InvalidArgumentError("coefficient_bound must be positive")

    @property
    def kappa(self) -> float:
        """Uniform (sup-norm) bound on every realization."""
        return (self.max_frequency + 1) * self.coefficient_bound

    @property
    def kappa_l2(self) -> float:
        """Bound on the L2 norm of every realization."""
        g = self.grid
        if abs(g.t_start) < 1e-12 and math.isclose(g.t_end, 2 * math.pi, rel_tol=1e-12):
            return self.coefficient_bound * math.sqrt(math.pi * (self.max_frequency + 2))
        return self.kappa * math.sqrt(g.length)

    def basis(self) -> np.ndarray:
        return np.cos(np.outer(np.arange(self.max_frequency + 1), self.grid.nodes))


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    sigma_sq: float = 1e-3
    bound: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "bounded_uniform"):
            raise InvalidArgumentError(f"unknown noise kind {self.kind!r}")
        if not self.sigma_sq >= 0:
            raise InvalidArgumentError("sigma_sq must be nonnegative")
        if self.kind == "bounded_uniform" and not self.bound >= 0:
            raise InvalidArgumentError("bound must be nonnegative")

    @property
    def variance(self) -> float:
        if self.kind == "gaussian":
            return self.sigma_sq
        if self.kind == "bounded_uniform":
            return self.bound**2 / 3.0
        return 0.0


@dataclass(frozen=True, eq=False)
class Dataset:
    curves: tuple
    xi: np.ndarray
    responses: np.ndarray
    clean_responses: np.ndarray
    seed: int

    def __len__(self):
        return len(self.curves)

    def prefix(self, n: int) -> "Dataset":
        """The first ``n`` samples, identical to drawing ``n`` samples directly."""
        return Dataset(self.curves[:n], self.xi[:n], self.responses[:n],
                       self.clean_responses[:n], self.seed)


def draw_process(spec: ProcessSpec, n: int, seed: int, stream: int = STREAM_PROCESS):
    """Draw ``n`` realizations; returns ``(curves, xi)`` with ``xi`` of shape ``(n, K+1)``."""
    if n < 1:
        raise InvalidArgumentError("n must be at least 1")
    b = spec.coefficient_bound
    xi = rng_stream(seed, stream).uniform(-b, b, size=(n, spec.max_frequency + 1))
    X = xi @ spec.basis()
    curves = tuple(Curve(spec.grid, row) for row in X)
    return curves, xi


def response_oracle(xi_row) -> float:
    """Closed-form response of the quadratic benchmark for one coefficient row."""
    xi = np.asarray(xi_row, dtype=float)
    if xi.shape != (6,):
        raise InvalidArgumentError(f"expected 6 coefficients, got shape {xi.shape}")
    return float(2.0 + math.pi**2 * xi[2] ** 2 + math.pi * (2.0 * xi[0] + xi[1] + xi[5]))


def responses_from_truth(truth: TruthSpec, grid: Grid, X: np.ndarray) -> np.ndarray:
    """Vectorized :func:`response_from_truth` over the rows of ``X``."""
    X = np.atleast_2d(X)
    P = cosine_projections(grid, X, truth.max_frequency)
    y = np.full(X.shape[0], truth.u0)
    for l in range(1, truth.p + 1):
        y += tensor_inner(P, truth, l)
    return y


def response_from_truth(truth: TruthSpec, x: Curve) -> float:
    """``u_0 + sum_l <u_l, x (x) ... (x) x>`` for a separable cosine truth."""
    return float(responses_from_truth(truth, x.grid, x.values[None, :])[0])


def add_noise(clean, spec: NoiseSpec, seed: int) -> np.ndarray:
    clean = np.asarray(clean, dtype=float)
    if spec.kind == "none":
        return clean.copy()
    gen = rng_stream(seed, STREAM_NOISE)
    if spec.kind == "gaussian":
        eps = math.sqrt(spec.sigma_sq) * gen.standard_normal(clean.shape)
    else:
        eps = gen.uniform(-spec.bound, spec.bound, size=clean.shape)
    return clean + eps


def make_dataset(process: ProcessSpec, truth: TruthSpec, noise: NoiseSpec,
                 n: int, seed: int) -> Dataset:
    curves, xi = draw_process(process, n, seed)
    X = np.vstack([c.values for c in curves])
    clean = responses_from_truth(truth, process.grid, X)
    return Dataset(curves, xi, add_noise(clean, noise, seed), clean, int(seed))


def write_dataset(directory, dataset: Dataset) -> tuple[str, str]:
    """Write ``curves.csv`` and ``responses.csv``; returns both paths."""
    os.makedirs(directory, exist_ok=True)
    curves_path = os.path.join(directory, "curves.csv")
    resp_path = os.path.join(directory, "responses.csv")
    write_curves(curves_path, dataset.curves)
    K = dataset.xi.shape[1] - 1
    with open(resp_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "y", "y_clean"] + [f"xi_{k}" for k in range(K + 1)] + ["seed"])
        for i in range(len(dataset)):
            w.writerow([i, repr(float(dataset.responses[i])), repr(float(dataset.clean_responses[i]))]
                       + [repr(float(v)) for v in dataset.xi[i]] + [dataset.seed])
    return curves_path, resp_path


def read_responses(path) -> np.ndarray:
    """Read the ``y`` column of a ``responses.csv`` file."""
    with open(path, newline="") as fh:
        return np.array([float(row["y"]) for row in csv.DictReader(fh)])
