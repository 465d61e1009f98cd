import numpy as np
import pytest

from pfr.funcdata import DEFAULT_GRID, Curve, Grid
from pfr.groundtruth import benchmark_truth
from pfr.simulate import NoiseSpec, ProcessSpec, make_dataset

SMALL_GRID = Grid(0.0, 2 * np.pi, 512)


def random_trig_curves(rng, n, grid=SMALL_GRID, n_freq=12, scale=0.3):
    """Generic curves (cos and sin up to ``n_freq``) so kernels are full rank for small ``n``."""
    t = grid.nodes
    k = np.arange(n_freq)
    out = []
    for _ in range(n):
        a, b = rng.uniform(-1, 1, n_freq), rng.uniform(-1, 1, n_freq)
        v = scale * (a @ np.cos(np.outer(k, t)) + b @ np.sin(np.outer(k, t)))
        out.append(Curve(grid, v))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def quad_dataset():
    """Noiseless quadratic-benchmark data, seed 1, 40 samples on the default grid."""
    return make_dataset(ProcessSpec(grid=DEFAULT_GRID), benchmark_truth(), NoiseSpec(), 40, 1)


# Acceptance verdicts: one line per criterion, printed after the run.
_VERDICTS: dict = {}


def record_verdict(key, label, ok, detail=""):
    entry = _VERDICTS.setdefault(key, {"label": label, "ok": True, "details": []})
    entry["ok"] = entry["ok"] and bool(ok)
    if detail:
        entry["details"].append(detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance verdicts")
    for key in sorted(_VERDICTS):
        v = _VERDICTS[key]
        tag = "PASS" if v["ok"] else "FAIL"
        terminalreporter.write_line(f"{tag}  [{key}] {v['label']}")
        for d in v["details"]:
            terminalreporter.write_line(f"        {d}")
