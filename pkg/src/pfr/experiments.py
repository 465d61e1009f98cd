"""Experiment configuration and the sweep runners behind the command line.

A configuration is a JSON object; every key is optional and the defaults
reproduce the quadratic benchmark (2048-node grid on ``[0, 2*pi]``, six random
cosine coefficients, ``p = 2``, four Tikhonov iterations, lambdas 1e-1, 1e-3
and 1e-9, ``N = 1..40``, ten seeds)::

    {
      "grid": {"t_start": 0.0, "t_end": 6.283185307179586, "n_points": 2048},
      "process": {"max_frequency": 5, "coefficient_bound": 1.0},
      "truth": "quadratic",            # or "linear", or a TruthSpec object
      "noise": {"kind": "none", "sigma_sq": 0.001, "bound": 0.0},
      "p": 2, "q": 4,
      "scheme": "iterated_tikhonov",
      "lambdas": [0.1, 0.001, 1e-9],   # or "filters": [FilterSpec objects]
      "path": "spectral",              # or "iterated"
      "error_method": "gram",          # or "tensor"
      "n_range": [1, 40],
      "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
      "n_mc": 2000, "delta": 0.05, "linear_factor": 10.0,
      "output": {"dir": "pfr-out", "formats": ["csv", "json", "svg", "png"]},
      "timing": false
    }
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import (
    effective_dimension,
    empirical_spectrum,
    lambda_star,
    s_quantity,
    upsilon,
    xi_bound,
)
from .errors import ConfigError, InvalidArgumentError, ParseError
from .filters import FilterSpec
from .funcdata import DEFAULT_GRID, Grid, kappa_tilde
from .groundtruth import (
    TruthSpec,
    cosine_projection,
    linear_truth,
    model_truth_error,
    benchmark_truth,
    truth_l2_norm_sq,
)
from .simulate import (
    STREAM_PROBE,
    NoiseSpec,
    ProcessSpec,
    draw_process,
    make_dataset,
    responses_from_truth,
)
from .solver import KernelSpectrum, fit_iterated, fit_tikhonov_reduced

__all__ = [
    "ExperimentConfig",
    "load_config",
    "apply_overrides",
    "worker_count",
    "l2_error",
    "run_error_curve",
    "mean_table",
    "write_table",
    "run_recovery_check",
    "run_diagnostics",
    "ERROR_CURVE_COLUMNS",
    "MEAN_COLUMNS",
]

ERROR_CURVE_COLUMNS = ("seed", "N", "lambda", "q", "p", "l2_error", "excess_risk", "wall_ms")
MEAN_COLUMNS = ("N", "lambda", "q", "p", "mean_l2_error", "mean_excess_risk", "n_seeds")
FORMATS = ("csv", "json", "svg", "png")

RECOVERY_TOL = 1e-4
OFF_TARGET_TOL = 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    process: ProcessSpec = field(default_factory=ProcessSpec)
    truth: TruthSpec = field(default_factory=benchmark_truth)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    p: int = 2
    q: int = 4
    filters: tuple = tuple(FilterSpec.iterated(lam, 4) for lam in (1e-1, 1e-3, 1e-9))
    path: str = "spectral"
    error_method: str = "gram"
    n_range: tuple = (1, 40)
    seeds: tuple = tuple(range(1, 11))
    n_mc: int = 2000
    delta: float = 0.05
    linear_factor: float = 10.0
    out_dir: str = "pfr-out"
    formats: tuple = ("csv", "json", "svg", "png")
    timing: bool = False

    @property
    def grid(self) -> Grid:
        return self.process.grid

    @property
    def n_values(self) -> range:
        return range(self.n_range[0], self.n_range[1] + 1)

    @property
    def n_max(self) -> int:
        return self.n_range[1]

    def validate(self) -> "ExperimentConfig":
        bad = []
        if not self.seeds:
            bad.append("seeds")
        if any(int(s) != s or s < 0 for s in self.seeds):
            bad.append("seeds")
        if not self.filters:
            bad.append("filters")
        lams = [f.lam for f in self.filters]
        if len(set(lams)) != len(lams):
            bad.append("filters")
        lo, hi = self.n_range
        if not (1 <= lo <= hi):
            bad.append("n_range")
        if self.p < 1:
            bad.append("p")
        if self.q < 1:
            bad.append("q")
        if self.n_mc < 1:
            bad.append("n_mc")
        if not 0 < self.delta < 1:
            bad.append("delta")
        if self.path not in ("spectral", "iterated"):
            bad.append("path")
        if self.error_method not in ("gram", "tensor"):
            bad.append("error_method")
        if self.path == "iterated" and any(
            f.scheme not in ("tikhonov", "iterated_tikhonov") for f in self.filters
        ):
            bad.append("path")
        if not set(self.formats) <= set(FORMATS):
            bad.append("output.formats")
        if bad:
            fields = sorted(set(bad))
            raise ConfigError(f"invalid configuration fields: {', '.join(fields)}", fields)
        return self

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "process": {
                "max_frequency": self.process.max_frequency,
                "coefficient_bound": self.process.coefficient_bound,
            },
            "truth": self.truth.to_dict(),
            "noise": {"kind": self.noise.kind, "sigma_sq": self.noise.sigma_sq, "bound": self.noise.bound},
            "p": self.p,
            "q": self.q,
            "filters": [f.to_dict() for f in self.filters],
            "path": self.path,
            "error_method": self.error_method,
            "n_range": list(self.n_range),
            "seeds": list(self.seeds),
            "n_mc": self.n_mc,
            "delta": self.delta,
            "linear_factor": self.linear_factor,
            "output": {"dir": self.out_dir, "formats": list(self.formats)},
            "timing": self.timing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object", ["<root>"])
        known = {
            "grid", "process", "truth", "noise", "p", "q", "scheme", "lambdas", "filters",
            "path", "error_method", "n_range", "seeds", "n_mc", "delta", "linear_factor", "output", "timing",
        }
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}", unknown)
        kw = {}
        bad = []

        def attempt(name, fn):
            try:
                return fn()
            except (KeyError, TypeError, ValueError, ParseError, InvalidArgumentError):
                bad.append(name)
                return None

        grid = DEFAULT_GRID
        if "grid" in d:
            grid = attempt("grid", lambda: Grid.from_dict(d["grid"])) or DEFAULT_GRID
        proc = d.get("process", {})
        kw["process"] = attempt("process", lambda: ProcessSpec(
            int(proc.get("max_frequency", 5)), float(proc.get("coefficient_bound", 1.0)), grid))
        if "truth" in d:
            kw["truth"] = attempt("truth", lambda: _parse_truth(d["truth"]))
        if "noise" in d:
            kw["noise"] = attempt("noise", lambda: NoiseSpec(**d["noise"]))
        for name, conv in (("p", int), ("q", int), ("n_mc", int), ("delta", float),
                           ("linear_factor", float), ("path", str), ("error_method", str),
                           ("timing", bool)):
            if name in d:
                kw[name] = attempt(name, lambda: conv(d[name]))
        q = kw.get("q") or 4
        if "filters" in d:
            kw["filters"] = attempt("filters", lambda: tuple(FilterSpec.from_dict(f) for f in d["filters"]))
        elif "lambdas" in d or "scheme" in d or "q" in d:
            scheme = d.get("scheme", "iterated_tikhonov")
            lams = d.get("lambdas", [1e-1, 1e-3, 1e-9])
            kw["filters"] = attempt("lambdas", lambda: tuple(
                FilterSpec(scheme, float(lam), q if scheme == "iterated_tikhonov" else 1) for lam in lams))
        if "n_range" in d:
            kw["n_range"] = attempt("n_range", lambda: _pair(d["n_range"]))
        if "seeds" in d:
            kw["seeds"] = attempt("seeds", lambda: tuple(int(s) for s in d["seeds"]))
        if "output" in d:
            out = d["output"]
            if "dir" in out:
                kw["out_dir"] = str(out["dir"])
            if "formats" in out:
                kw["formats"] = attempt("output.formats", lambda: tuple(str(f) for f in out["formats"]))
        if bad:
            raise ConfigError(f"invalid configuration fields: {', '.join(sorted(bad))}", sorted(bad))
        return cls(**kw).validate()


def _pair(v):
    lo, hi = (int(x) for x in v)
    return (lo, hi)


def _parse_truth(v) -> TruthSpec:
    if v in ("quadratic", "benchmark"):
        return benchmark_truth()
    if v == "linear":
        return linear_truth(1)
    return TruthSpec.from_dict(v)


def load_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}", ["<file>"]) from exc
    return ExperimentConfig.from_dict(doc)


def apply_overrides(cfg: ExperimentConfig, *, lam=None, n_max=None, seed=None, q=None,
                    p=None, out=None, timing=None) -> ExperimentConfig:
    """Command-line overrides; ``lam`` replaces the whole ladder by one filter."""
    kw = {}
    try:
        if q is not None:
            kw["q"] = int(q)
            kw["filters"] = tuple(
                replace(f, iterations=int(q)) if f.scheme == "iterated_tikhonov" else f for f in cfg.filters
            )
        if lam is not None:
            base = (kw.get("filters") or cfg.filters)[0]
            kw["filters"] = (replace(base, lam=float(lam)),)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc), ["lambda" if lam is not None else "q"]) from exc
    if n_max is not None:
        kw["n_range"] = (min(cfg.n_range[0], int(n_max)), int(n_max))
    if seed is not None:
        kw["seeds"] = (int(seed),)
    if p is not None:
        kw["p"] = int(p)
    if out is not None:
        kw["out_dir"] = str(out)
    if timing is not None:
        kw["timing"] = bool(timing)
    try:
        return replace(cfg, **kw).validate()
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc), sorted(kw)) from exc


def worker_count() -> int:
    env = os.environ.get("PFR_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"PFR_THREADS must be an integer, got {env!r}", ["PFR_THREADS"]) from None
        return max(1, n)
    return os.cpu_count() or 1


def l2_error(model, truth: TruthSpec, method: str = "gram") -> float:
    """L2 error allowing model and truth orders to differ."""
    if truth.p <= model.p:
        return model_truth_error(model, truth.with_degree(model.p), method)
    tail = sum(truth_l2_norm_sq(truth, l) for l in range(model.p + 1, truth.p + 1))
    head = model_truth_error(model, truth.with_degree(model.p), method)
    return math.sqrt(head**2 + tail)


def _fit(cfg: ExperimentConfig, spectrum: KernelSpectrum, filt: FilterSpec, y):
    if cfg.path == "spectral":
        return spectrum.fit(filt, y).model
    if filt.scheme == "tikhonov":
        return fit_tikhonov_reduced(spectrum.samples, y, filt.lam, spectrum.p).model
    return fit_iterated(spectrum.samples, y, filt.lam, spectrum.p, filt.iterations).model


class _Probe:
    """Fresh Monte Carlo curves and their cross inner products with one training pool."""

    def __init__(self, cfg: ExperimentConfig, seed: int, X_train: np.ndarray):
        curves, _ = draw_process(cfg.process, cfg.n_mc, seed, stream=STREAM_PROBE)
        Z = np.vstack([c.values for c in curves])
        self.y = responses_from_truth(cfg.truth, cfg.grid, Z)
        self.cross = (Z * cfg.grid.weights) @ X_train.T

    def excess_risk(self, model) -> float:
        pred = model.predict_inner(self.cross[:, : model.n])
        return float(np.mean((self.y - pred) ** 2))


def _map_seeds(fn, seeds):
    workers = min(worker_count(), len(seeds))
    if workers <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def run_error_curve(cfg: ExperimentConfig) -> list[dict]:
    """Rows ``(seed, N, lambda, q, p, l2_error, excess_risk, wall_ms)`` for every task.

    Rows are sorted by seed, N and ladder position, so the table does not
    depend on scheduling.  ``wall_ms`` is 0 unless ``cfg.timing`` is set.
    """
    cfg.validate()

    def one_seed(seed):
        ds = make_dataset(cfg.process, cfg.truth, cfg.noise, cfg.n_max, seed)
        X = np.vstack([c.values for c in ds.curves])
        probe = _Probe(cfg, seed, X)
        rows = []
        for n in cfg.n_values:
            t0 = time.perf_counter()
            spectrum = KernelSpectrum(ds.curves[:n], cfg.p)
            shared = time.perf_counter() - t0
            for filt in cfg.filters:
                t1 = time.perf_counter()
                model = _fit(cfg, spectrum, filt, ds.responses[:n])
                l2 = l2_error(model, cfg.truth, cfg.error_method)
                risk = probe.excess_risk(model)
                elapsed = (time.perf_counter() - t1 + shared) * 1e3
                rows.append({
                    "seed": int(seed), "N": n, "lambda": filt.lam, "q": filt.iterations,
                    "p": cfg.p, "l2_error": l2, "excess_risk": risk,
                    "wall_ms": elapsed if cfg.timing else 0.0,
                })
        return rows

    order = {f.lam: i for i, f in enumerate(cfg.filters)}
    rows = [r for chunk in _map_seeds(one_seed, list(cfg.seeds)) for r in chunk]
    rows.sort(key=lambda r: (r["seed"], r["N"], order[r["lambda"]]))
    return rows


def mean_table(rows: list[dict]) -> list[dict]:
    """Average ``l2_error`` and ``excess_risk`` over seeds for each ``(N, lambda)``."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["N"], r["lambda"], r["q"], r["p"]), []).append(r)
    out = []
    for (n, lam, q, p), rs in groups.items():
        out.append({
            "N": n, "lambda": lam, "q": q, "p": p,
            "mean_l2_error": float(np.mean([r["l2_error"] for r in rs])),
            "mean_excess_risk": float(np.mean([r["excess_risk"] for r in rs])),
            "n_seeds": len(rs),
        })
    out.sort(key=lambda r: (r["N"], -r["lambda"]))
    return out


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".12g")


def write_table(path, rows: list[dict], columns) -> None:
    """CSV with fixed 12-significant-digit formatting."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[c]) for c in columns) + "\n")


# Coefficient recovery ----------------------------------------------------------

def _targets(truth: TruthSpec, K: int):
    u1 = [0.0] * (K + 1)
    if truth.p >= 1:
        for c, (f,) in truth.terms[1]:
            if f <= K:
                u1[f] = c
    diag = [0.0] * (K + 1)
    if truth.p >= 2:
        for c, (f, g) in truth.terms[2]:
            if f == g and f <= K:
                diag[f] = c
    return u1, diag


def recovery_filter(cfg: ExperimentConfig) -> FilterSpec:
    """Iterated Tikhonov with ``cfg.q`` steps at the smallest lambda of the ladder."""
    return FilterSpec.iterated(min(f.lam for f in cfg.filters), cfg.q)


def run_recovery_check(cfg: ExperimentConfig) -> dict:
    """Fitted cosine coefficients against the truth for every N and seed."""
    cfg.validate()
    if cfg.p != 2 or cfg.truth.p != 2:
        raise ConfigError("recovery check needs p = 2 and a quadratic truth", ["p", "truth"])
    filt = recovery_filter(cfg)
    K = cfg.process.max_frequency
    u1_target, diag_target = _targets(cfg.truth, K)

    def one_seed(seed):
        ds = make_dataset(cfg.process, cfg.truth, cfg.noise, cfg.n_max, seed)
        rows = []
        first = None
        for n in cfg.n_values:
            model = _fit(cfg, KernelSpectrum(ds.curves[:n], 2), filt, ds.responses[:n])
            u1 = [cosine_projection(model, 1, (k,)) for k in range(K + 1)]
            diag = [cosine_projection(model, 2, (k, k)) for k in range(1, K + 1)]
            err_b0 = abs(model.b0 - cfg.truth.u0)
            err_u1 = max(abs(a - b) for a, b in zip(u1, u1_target))
            on = [abs(d - t) for d, t in zip(diag, diag_target[1:]) if t != 0.0]
            off = [abs(d) for d, t in zip(diag, diag_target[1:]) if t == 0.0]
            passed = (err_b0 < RECOVERY_TOL and err_u1 < RECOVERY_TOL
                      and all(e < RECOVERY_TOL for e in on) and all(e < OFF_TARGET_TOL for e in off))
            if passed and first is None:
                first = n
            rows.append({
                "N": n, "b0": model.b0, "u1": u1, "u2_diag": diag,
                "err_b0": err_b0, "err_u1": err_u1,
                "err_u2_target": max(on, default=0.0), "max_off_target": max(off, default=0.0),
                "passed": passed,
            })
        return {"seed": int(seed), "first_passing_N": first, "rows": rows,
                "linear_comparison": _linear_comparison(cfg, ds, seed, filt)}

    return {
        "filter": filt.to_dict(),
        "tolerances": {"coefficient": RECOVERY_TOL, "off_target": OFF_TARGET_TOL},
        "u1_target": u1_target,
        "u2_diag_target": diag_target[1:],
        "seeds": _map_seeds(one_seed, list(cfg.seeds)),
    }


def _linear_comparison(cfg, ds, seed, filt) -> dict:
    X = np.vstack([c.values for c in ds.curves])
    probe = _Probe(cfg, seed, X)
    risks = {}
    for p in (1, 2):
        model = _fit(cfg, KernelSpectrum(ds.curves, p), filt, ds.responses)
        risks[p] = probe.excess_risk(model)
    ratio = risks[1] / risks[2] if risks[2] > 0 else math.inf
    return {
        "N": len(ds), "excess_risk_p1": risks[1], "excess_risk_p2": risks[2],
        "ratio": ratio, "factor": cfg.linear_factor, "passed": bool(ratio >= cfg.linear_factor),
    }


# Diagnostics -------------------------------------------------------------------

def run_diagnostics(cfg: ExperimentConfig) -> dict:
    """Spectrum-based quantities for one dataset of size ``n_max`` per seed."""
    cfg.validate()
    kappa = cfg.process.kappa_l2
    kt = kappa_tilde(kappa, cfg.p)

    def one_seed(seed):
        ds = make_dataset(cfg.process, cfg.truth, cfg.noise, cfg.n_max, seed)
        n = len(ds)
        spec = empirical_spectrum(ds.curves, cfg.p, kappa=kappa)
        lstar = lambda_star(spec, n)
        probe = _Probe(cfg, seed, np.vstack([c.values for c in ds.curves]))
        spectrum = KernelSpectrum(ds.curves, cfg.p)
        ladder = []
        for filt in sorted(cfg.filters, key=lambda f: -f.lam):
            model = _fit(cfg, spectrum, filt, ds.responses)
            ladder.append({
                "lambda": filt.lam,
                "eff_dim": effective_dimension(spec, filt.lam),
                "S": s_quantity(n, filt.lam, spec),
                "upsilon": upsilon(n, filt.lam, spec),
                "xi": xi_bound(n, filt.lam, cfg.delta, spec),
                "delta": cfg.delta,
                "excess_risk": probe.excess_risk(model),
            })
        return {
            "seed": int(seed),
            "N": n,
            "kappa_tilde": kt,
            "spectrum": spec.eigenvalues.tolist(),
            "lambda_star": lstar,
            "n_lambda_star": n * lstar,
            "upsilon_at_lambda_star": upsilon(n, lstar, spec),
            "upsilon_bound": 1.0 + (4.0 * kt**2 + 2.0 * kt) ** 2,
            "ladder": ladder,
        }

    return {"p": cfg.p, "seeds": _map_seeds(one_seed, list(cfg.seeds))}
