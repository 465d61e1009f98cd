import json
import math

import numpy as np
import pytest

from pfr.errors import InvalidArgumentError, ParseError
from pfr.filters import FilterSpec
from pfr.funcdata import DEFAULT_GRID, Grid, cosine, gram
from pfr.groundtruth import (
    TruthSpec,
    cosine_projection,
    linear_truth,
    model_truth_error,
    benchmark_truth,
    truth_l2_norm_sq,
)
from pfr.solver import PfrModel, fit_iterated, fit_spectral

from conftest import random_trig_curves

COARSE = Grid(0.0, 2 * math.pi, 256)


def make_model(curves, b0, b, p=2):
    return PfrModel(p, b0, np.asarray(b, float), curves, gram(curves))


def quadrature_error(model, truth):
    """Dense 2D grid evaluation of ||u_fit - u_truth|| for p <= 2."""
    g = model.grid
    t, w = g.nodes, g.weights
    X = model.values_matrix()

    def truth_component(l):
        out = np.zeros((g.n_points,) * l) if l else 0.0
        for c, freqs in truth.terms[l]:
            if l == 1:
                out = out + c * np.cos(freqs[0] * t)
            else:
                out = out + c * np.outer(np.cos(freqs[0] * t), np.cos(freqs[1] * t))
        return out

    total = (model.b0 - truth.u0) ** 2
    d1 = model.b @ X - truth_component(1)
    total += w @ (d1 * d1)
    if truth.p >= 2:
        d2 = np.einsum("i,is,it->st", model.b, X, X) - truth_component(2)
        total += w @ (d2 * d2) @ w
    return math.sqrt(total)


class TestTruthSpec:
    def test_norms(self):
        t = benchmark_truth()
        assert truth_l2_norm_sq(t, 0) == 4.0
        assert truth_l2_norm_sq(t, 1) == pytest.approx(4 * math.pi)
        assert truth_l2_norm_sq(t, 2) == pytest.approx(math.pi**2)

    def test_json_format(self):
        doc = json.loads(benchmark_truth().to_json())
        assert doc == {
            "p": 2,
            "terms": [
                [{"c": 2.0, "f": []}],
                [{"c": 1.0, "f": [0]}, {"c": 1.0, "f": [1]}, {"c": 1.0, "f": [5]}],
                [{"c": 1.0, "f": [2, 2]}],
            ],
        }
        assert TruthSpec.from_json(benchmark_truth().to_json()) == benchmark_truth()

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            TruthSpec(1, (((1.0, ()),), ((1.0, (1,)), (2.0, (1,)))))
        with pytest.raises(InvalidArgumentError):
            TruthSpec(1, (((1.0, ()),), ((1.0, (-1,)),)))
        with pytest.raises(InvalidArgumentError):
            TruthSpec(1, (((1.0, ()),), ((1.0, (1, 2)),)))
        with pytest.raises(ParseError):
            TruthSpec.from_json('{"p": 1}')
        with pytest.raises(ParseError):
            TruthSpec.from_json("{")

    def test_norm_degree_range(self):
        with pytest.raises(InvalidArgumentError):
            truth_l2_norm_sq(benchmark_truth(), 3)

    def test_with_degree(self):
        t = linear_truth(2)
        assert t.p == 2 and t.terms[2] == ()
        assert t.with_degree(1).p == 1


class TestModelTruthError:
    @pytest.fixture
    def curves(self, rng):
        return random_trig_curves(rng, 4, grid=DEFAULT_GRID, n_freq=6)

    @pytest.mark.parametrize("method", ["gram", "tensor"])
    def test_zero_model(self, curves, method):
        err = model_truth_error(make_model(curves, 0.0, np.zeros(4)), benchmark_truth(), method)
        assert err == pytest.approx(math.sqrt(4 + 4 * math.pi + math.pi**2), rel=1e-12)
        assert abs(err - 5.1416) < 1e-4

    @pytest.mark.parametrize("method", ["gram", "tensor"])
    def test_intercept_only(self, curves, method):
        err = model_truth_error(make_model(curves, 2.0, np.zeros(4)), benchmark_truth(), method)
        assert err == pytest.approx(math.sqrt(4 * math.pi + math.pi**2), rel=1e-12)
        assert abs(err - 4.7367) < 1e-4

    @pytest.mark.parametrize("method", ["gram", "tensor"])
    def test_exact_one_sample_expansion(self, method):
        # b = 1 on X = cos 2t reproduces u1 = cos 2t and u2 = cos 2t cos 2tau
        truth = TruthSpec(2, (((1.0, ()),), ((1.0, (2,)),), ((1.0, (2, 2)),)))
        model = make_model([cosine(DEFAULT_GRID, 2)], 1.0, [1.0])
        assert model_truth_error(model, truth, method) < 1e-6
        coarse = make_model([cosine(COARSE, 2)], 1.0, [1.0])
        assert quadrature_error(coarse, truth) < 1e-10

    @pytest.mark.parametrize("method", ["gram", "tensor"])
    def test_matches_quadrature_oracle(self, rng, method):
        curves = random_trig_curves(rng, 5, grid=COARSE, n_freq=7)
        model = make_model(curves, 1.3, rng.normal(size=5))
        truth = benchmark_truth()
        got = model_truth_error(model, truth, method)
        assert got == pytest.approx(quadrature_error(model, truth), rel=1e-6)

    def test_methods_agree_on_benign_fit(self, quad_dataset):
        ds = quad_dataset.prefix(20)
        m = fit_spectral(ds.curves, ds.responses, FilterSpec.iterated(1e-3, 4), 2).model
        a = model_truth_error(m, benchmark_truth(), "gram")
        b = model_truth_error(m, benchmark_truth(), "tensor")
        assert a == pytest.approx(b, rel=1e-8)

    def test_tensor_method_survives_cancellation(self, quad_dataset):
        # noisy responses through the LU recurrence give large cancelling coefficients
        ds = quad_dataset.prefix(40)
        noisy = ds.responses + 0.03 * np.random.default_rng(5).standard_normal(40)
        lu = fit_iterated(ds.curves, noisy, 1e-9, 2, 4).model
        sp = fit_spectral(ds.curves, noisy, FilterSpec.iterated(1e-9, 4), 2).model
        ref = model_truth_error(sp, benchmark_truth(), "tensor")
        assert model_truth_error(lu, benchmark_truth(), "tensor") == pytest.approx(ref, rel=1e-4)

    def test_degree_mismatch(self, curves):
        with pytest.raises(InvalidArgumentError):
            model_truth_error(make_model(curves, 0.0, np.zeros(4), p=1), benchmark_truth())

    def test_unknown_method(self, curves):
        with pytest.raises(InvalidArgumentError):
            model_truth_error(make_model(curves, 0.0, np.zeros(4)), benchmark_truth(), "grid")

    def test_domain_check(self, rng):
        curves = random_trig_curves(rng, 2, grid=Grid(0.0, 1.0, 64))
        with pytest.raises(InvalidArgumentError):
            model_truth_error(make_model(curves, 0.0, np.zeros(2)), benchmark_truth())

    def test_permutation_invariant(self, curves, rng):
        b = rng.normal(size=4)
        perm = rng.permutation(4)
        a = model_truth_error(make_model(curves, 0.5, b), benchmark_truth())
        c = model_truth_error(make_model([curves[i] for i in perm], 0.5, b[perm]), benchmark_truth())
        assert a == pytest.approx(c, rel=1e-12)

    def test_intercept_lower_bound(self, curves, rng):
        for _ in range(10):
            b0 = rng.normal() * 3
            m = make_model(curves, b0, rng.normal(size=4))
            assert model_truth_error(m, benchmark_truth()) >= abs(b0 - 2.0)


class TestCosineProjection:
    def test_zero_model(self, rng):
        curves = random_trig_curves(rng, 3, grid=DEFAULT_GRID)
        m = make_model(curves, 0.0, np.zeros(3))
        assert cosine_projection(m, 2, (1, 3)) == 0.0

    def test_benchmark_fit(self, quad_dataset):
        ds = quad_dataset.prefix(30)
        m = fit_spectral(ds.curves, ds.responses, FilterSpec.iterated(1e-9, 4), 2).model
        assert abs(cosine_projection(m, 2, (2, 2)) - 1.0) < 1e-4
        for k in (1, 3, 4, 5):
            assert abs(cosine_projection(m, 2, (k, k))) < 1e-6

    def test_linear_in_b(self, rng):
        curves = random_trig_curves(rng, 4, grid=DEFAULT_GRID)
        b1, b2 = rng.normal(size=4), rng.normal(size=4)
        for l, f in [(1, (3,)), (2, (1, 2)), (3, (0, 1, 1))]:
            s = cosine_projection(make_model(curves, 0.0, b1 + b2, p=3), l, f)
            parts = cosine_projection(make_model(curves, 0.0, b1, p=3), l, f) + cosine_projection(
                make_model(curves, 0.0, b2, p=3), l, f
            )
            assert s == pytest.approx(parts, rel=1e-12, abs=1e-14)

    def test_dimension_mismatch(self, rng):
        m = make_model(random_trig_curves(rng, 2, grid=DEFAULT_GRID), 0.0, np.zeros(2))
        with pytest.raises(InvalidArgumentError):
            cosine_projection(m, 2, (1,))
        with pytest.raises(InvalidArgumentError):
            cosine_projection(m, 0, ())
