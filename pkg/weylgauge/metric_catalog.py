"""Named metrics and JSON-described diagonal-polynomial metrics."""

import json
import logging
import os
from typing import Any

import jsonschema
import numpy as np

from .errors import InvalidMetricError
from .geometry import ChartMetric

log = logging.getLogger(__name__)

POLYNOMIAL_METRIC_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dim", "kind", "entries"],
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "kind": {"const": "diagonal-polynomial"},
        "signature": {"enum": ["positive-definite", "lorentzian"]},
        "entries": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["coefficient", "powers"],
                    "properties": {
                        "coefficient": {"type": "number"},
                        "powers": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    },
                },
            },
        },
    },
}


def _diagonal(values: list[np.ndarray], batch: tuple[int, ...]) -> np.ndarray:
    n = len(values)
    out = np.zeros(batch + (n, n))
    for i, v in enumerate(values):
        out[..., i, i] = v
    return out


def _zeros(dim: int, order: int):
    def partials(x: np.ndarray) -> np.ndarray:
        return np.zeros(x.shape[:-1] + (dim,) * (order + 2))

    return partials


def flat(dim: int) -> ChartMetric:
    eye = np.eye(dim)
    return ChartMetric(
        dim=dim,
        components=lambda x: np.broadcast_to(eye, x.shape[:-1] + (dim, dim)).copy(),
        derivative_mode="analytic",
        partials=_zeros(dim, 1),
        second_partials=_zeros(dim, 2),
        name=f"flat-{dim}",
    )


def minkowski(dim: int) -> ChartMetric:
    if dim < 2:
        raise InvalidMetricError(f"minkowski-{dim}: needs at least one time and one space axis")
    eta = np.diag([1.0] + [-1.0] * (dim - 1))
    return ChartMetric(
        dim=dim,
        components=lambda x: np.broadcast_to(eta, x.shape[:-1] + (dim, dim)).copy(),
        derivative_mode="analytic",
        signature="lorentzian",
        partials=_zeros(dim, 1),
        second_partials=_zeros(dim, 2),
        name=f"minkowski-{dim}",
    )


def constant_diagonal(coefficients: list[float]) -> ChartMetric:
    c = np.asarray(coefficients, dtype=float)
    dim = c.size
    negative = int(np.sum(c < 0))
    if np.any(c == 0) or not np.all(np.isfinite(c)):
        raise InvalidMetricError(f"diag:{coefficients}: entries must be finite and non-zero")
    if negative > 1 or (negative == 1 and dim < 2):
        raise InvalidMetricError(
            f"diag:{coefficients}: {negative} negative entries; only positive-definite or one timelike direction is supported"
        )
    signature = "lorentzian" if negative else "positive-definite"
    return ChartMetric(
        dim=dim,
        components=lambda x: np.broadcast_to(np.diag(c), x.shape[:-1] + (dim, dim)).copy(),
        derivative_mode="analytic",
        signature=signature,
        partials=_zeros(dim, 1),
        second_partials=_zeros(dim, 2),
        name="diag:" + ",".join(f"{v:g}" for v in c),
    )


def sphere(radius: float) -> ChartMetric:
    """Round 2-sphere in (theta, phi): diag(a^2, a^2 sin^2 theta)."""
    if radius <= 0.0:
        raise InvalidMetricError(f"sphere:{radius}: radius must be > 0")
    a2 = radius * radius

    def components(x):
        s = np.sin(x[..., 0])
        return _diagonal([np.full(x.shape[:-1], a2), a2 * s * s], x.shape[:-1])

    def partials(x):
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 1, 1] = a2 * np.sin(2.0 * x[..., 0])
        return out

    def second_partials(x):
        out = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
        out[..., 0, 0, 1, 1] = 2.0 * a2 * np.cos(2.0 * x[..., 0])
        return out

    return ChartMetric(
        dim=2,
        components=components,
        derivative_mode="analytic",
        partials=partials,
        second_partials=second_partials,
        name=f"sphere:{radius:g}",
        domain=lambda x: (x[..., 0] > 0.0) & (x[..., 0] < np.pi),
    )


def hyperbolic_half_plane() -> ChartMetric:
    """Upper half-plane (x, y), y > 0, with g = diag(1/y^2, 1/y^2)."""

    def components(x):
        w = 1.0 / x[..., 1] ** 2
        return _diagonal([w, w], x.shape[:-1])

    def partials(x):
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        d = -2.0 / x[..., 1] ** 3
        out[..., 1, 0, 0] = d
        out[..., 1, 1, 1] = d
        return out

    def second_partials(x):
        out = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
        dd = 6.0 / x[..., 1] ** 4
        out[..., 1, 1, 0, 0] = dd
        out[..., 1, 1, 1, 1] = dd
        return out

    return ChartMetric(
        dim=2,
        components=components,
        derivative_mode="analytic",
        partials=partials,
        second_partials=second_partials,
        name="hyperbolic2",
        domain=lambda x: x[..., 1] > 0.0,
    )


def ring_warp(amplitude: float) -> ChartMetric:
    """Periodic 1D metric g_11 = (1 + amp sin x)^2."""
    if abs(amplitude) >= 1.0:
        raise InvalidMetricError(f"ring-warp:{amplitude}: |amp| must be < 1 to stay non-degenerate")

    def components(x):
        w = 1.0 + amplitude * np.sin(x[..., 0])
        return (w * w)[..., None, None]

    def partials(x):
        w = 1.0 + amplitude * np.sin(x[..., 0])
        return (2.0 * w * amplitude * np.cos(x[..., 0]))[..., None, None, None]

    def second_partials(x):
        s, c = np.sin(x[..., 0]), np.cos(x[..., 0])
        w = 1.0 + amplitude * s
        return (2.0 * (amplitude * c) ** 2 - 2.0 * w * amplitude * s)[..., None, None, None, None]

    return ChartMetric(
        dim=1,
        components=components,
        derivative_mode="analytic",
        partials=partials,
        second_partials=second_partials,
        name=f"ring-warp:{amplitude:g}",
    )


# ---------------------------------------------------------------------------
# Diagonal polynomials
# ---------------------------------------------------------------------------


def _monomial(x: np.ndarray, coefficient: float, powers: np.ndarray, wrt: tuple[int, ...]) -> np.ndarray:
    p = powers.astype(float)
    scale = coefficient
    for axis in wrt:
        scale *= p[axis]
        p[axis] -= 1.0
    if scale == 0.0:
        return np.zeros(x.shape[:-1])
    return scale * np.prod(x**p, axis=-1)


def diagonal_polynomial(description: dict) -> ChartMetric:
    try:
        jsonschema.validate(description, POLYNOMIAL_METRIC_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise InvalidMetricError(f"metric description field '{where}': {e.message}") from e

    dim = description["dim"]
    entries = description["entries"]
    if len(entries) != dim:
        raise InvalidMetricError(f"metric description field 'entries': expected {dim} diagonal tables, got {len(entries)}")
    tables = []
    for i, terms in enumerate(entries):
        table = []
        for term in terms:
            powers = np.asarray(term["powers"], dtype=float)
            if powers.size != dim:
                raise InvalidMetricError(f"metric description field 'entries/{i}': powers need {dim} exponents")
            table.append((float(term["coefficient"]), powers))
        tables.append(table)

    def entry(x, i, wrt=()):
        return sum(_monomial(x, c, p, wrt) for c, p in tables[i])

    def components(x):
        return _diagonal([entry(x, i) for i in range(dim)], x.shape[:-1])

    def partials(x):
        out = np.zeros(x.shape[:-1] + (dim, dim, dim))
        for lam in range(dim):
            for i in range(dim):
                out[..., lam, i, i] = entry(x, i, (lam,))
        return out

    def second_partials(x):
        out = np.zeros(x.shape[:-1] + (dim,) * 4)
        for lam in range(dim):
            for eta in range(dim):
                for i in range(dim):
                    out[..., lam, eta, i, i] = entry(x, i, (lam, eta))
        return out

    return ChartMetric(
        dim=dim,
        components=components,
        derivative_mode="analytic",
        signature=description.get("signature", "positive-definite"),
        partials=partials,
        second_partials=second_partials,
        name="diagonal-polynomial",
    )


def load_metric_file(path: str) -> ChartMetric:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            description = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidMetricError(f"could not read metric description {path}: {e}") from e
    log.debug(f"Loaded metric description from {path}")
    return diagonal_polynomial(description)


def _numbers(text: str, metric_id: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise InvalidMetricError(f"metric id '{metric_id}': {e}") from e


def resolve_metric(metric_id: str | dict) -> ChartMetric:
    """Build a metric from a catalogue id, a JSON file path or a description dict."""
    if isinstance(metric_id, dict):
        return diagonal_polynomial(metric_id)
    if metric_id.endswith(".json") or os.path.isfile(metric_id):
        return load_metric_file(metric_id)

    kind, _, arg = metric_id.partition(":")
    if not arg and "-" in kind:
        kind, _, arg = kind.partition("-")
    try:
        if kind == "flat":
            return flat(int(arg))
        if kind == "minkowski":
            return minkowski(int(arg))
        if kind == "sphere":
            return sphere(float(arg))
        if kind == "hyperbolic2":
            return hyperbolic_half_plane()
        if kind == "ring-warp":
            return ring_warp(float(arg))
        if kind == "diag":
            values = _numbers(arg, metric_id)
            if not values:
                raise InvalidMetricError(f"metric id '{metric_id}': no diagonal entries")
            return constant_diagonal(values)
    except ValueError as e:
        raise InvalidMetricError(f"metric id '{metric_id}': {e}") from e
    raise InvalidMetricError(f"unknown metric id '{metric_id}'")
