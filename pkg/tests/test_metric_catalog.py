"""Tests for weylgauge.metric_catalog: catalogue ids and JSON polynomial metrics."""

import json
import math

import numpy as np
import pytest

from weylgauge.errors import InvalidMetricError
from weylgauge.geometry import ChartMetric, metric_jet
from weylgauge.metric_catalog import diagonal_polynomial, load_metric_file, resolve_metric, ring_warp


# A cone-like chart g = diag(1, x^2 + 1): curved away from x = 0.
WARPED = {
    "dim": 2,
    "kind": "diagonal-polynomial",
    "entries": [
        [{"coefficient": 1.0, "powers": [0, 0]}],
        [{"coefficient": 1.0, "powers": [2, 0]}, {"coefficient": 1.0, "powers": [0, 0]}],
    ],
}


class TestResolveMetric:
    @pytest.mark.parametrize("metric_id,dim", [
        ("flat-2", 2),
        ("flat:3", 3),
        ("minkowski-4", 4),
        ("sphere:2", 2),
        ("hyperbolic2", 2),
        ("ring-warp:0.1", 1),
        ("diag:1,4", 2),
    ])
    def test_catalogue_ids(self, metric_id: str, dim: int):
        metric = resolve_metric(metric_id)
        assert isinstance(metric, ChartMetric)
        assert metric.dim == dim

    def test_sphere_name_keeps_radius(self):
        assert resolve_metric("sphere:2").name == "sphere:2"

    @pytest.mark.parametrize("metric_id", ["torus:1", "sphere:abc", "diag:", "ring-warp:1.5", "diag:-1,-1,1", "diag:1,0", "diag:-1"])
    def test_bad_ids_raise(self, metric_id: str):
        with pytest.raises(InvalidMetricError):
            resolve_metric(metric_id)

    @pytest.mark.parametrize("metric_id,signature", [("diag:1,4", "positive-definite"), ("diag:-1,1,1", "lorentzian")])
    def test_diagonal_signature(self, metric_id: str, signature: str):
        assert resolve_metric(metric_id).signature == signature

    def test_description_dict(self):
        assert resolve_metric(WARPED).name == "diagonal-polynomial"

    def test_json_file(self, tmp_path):
        path = tmp_path / "warped.json"
        path.write_text(json.dumps(WARPED))
        metric = resolve_metric(str(path))
        assert np.allclose(metric.g([2.0, 0.0]), np.diag([1.0, 5.0]))


class TestDiagonalPolynomial:
    def test_analytic_derivatives_match_central_differences(self):
        metric = diagonal_polynomial(WARPED)
        numeric = ChartMetric(dim=2, components=metric.components)
        x = np.array([0.7, -0.4])
        assert np.allclose(metric.dg(x), numeric.dg(x), atol=1e-8)
        assert np.allclose(metric.d2g(x), numeric.d2g(x), atol=1e-5)

    def test_curvature_matches_closed_form(self):
        # g = diag(1, f^2) with f = sqrt(x^2 + 1): R = -2 f''/f
        x = 0.7
        f = math.sqrt(x * x + 1.0)
        f2 = 1.0 / f**3
        jet = metric_jet(diagonal_polynomial(WARPED), [x, 0.3])
        assert jet.ricci_scalar == pytest.approx(-2.0 * f2 / f, rel=1e-10)

    def test_unknown_field_names_the_field(self):
        bad = dict(WARPED, colour="blue")
        with pytest.raises(InvalidMetricError, match="colour"):
            diagonal_polynomial(bad)

    def test_wrong_number_of_tables(self):
        with pytest.raises(InvalidMetricError, match="entries"):
            diagonal_polynomial(dict(WARPED, dim=3))

    def test_wrong_number_of_powers(self):
        bad = dict(WARPED, entries=[[{"coefficient": 1.0, "powers": [0]}], WARPED["entries"][1]])
        with pytest.raises(InvalidMetricError, match="exponents"):
            diagonal_polynomial(bad)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(InvalidMetricError):
            load_metric_file(str(tmp_path / "missing.json"))


class TestRingWarp:
    def test_is_periodic(self):
        metric = ring_warp(0.3)
        assert np.allclose(metric.g([0.4]), metric.g([0.4 + 2.0 * math.pi]))

    def test_one_dimensional_chart_is_flat(self):
        assert metric_jet(ring_warp(0.3), [1.0]).ricci_scalar == pytest.approx(0.0, abs=1e-14)
