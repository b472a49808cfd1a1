"""Experiment configurations, their defaults and the runners behind the CLI.

An experiment config is ``{schema_version, experiment, parameters, output}``.
Parameters not given in the file fall back to ``DEFAULT_PARAMETERS``; every
object in the schema rejects unknown fields.
"""

from __future__ import annotations

import copy
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable

import jsonschema
import numpy as np

from .artifacts import ArtifactWriter
from .errors import ConfigError
from .gauge_kg import EMField, branch_phase_field, covariant_identity_residual, plane_wave_residual
from .geometry import SELECTED_A_SIGN, SELECTED_A_VARIANT, curvature_scalar_oracle, metric_field
from .interference import (
    MCSampler,
    ScatterProbe,
    TwoPathSetup,
    central_maximum,
    density_pattern,
    flux_shift_rate,
    fringe_positions,
    histogram_modes,
    mc_density,
    measurement_impact,
    probed_setup,
)
from .metric_catalog import flat, resolve_metric
from .paths_action import (
    LagrangianSpec,
    action,
    arc_length,
    el_residual,
    find_extremal,
    homogeneous_action,
    shoot_geodesic,
    smooth_perturbation,
    straight_path,
)
from .propagator import (
    SELECTED_CUBIC_SIGN,
    HJExpansion,
    WaveField,
    apply_gauge,
    born_density,
    evolve_tau,
    hj_residual,
    invariant_norm,
    kernel_step,
    kg_residual,
    moments_closed_form,
    moments_eta_limit,
    moments_quadrature,
    primed_values,
    ring_axis,
    schrodinger_rhs,
    select_expansion,
)
from .utils import TWO_PI, fitted_order

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "geometry-check",
    "extremal",
    "double-slit",
    "ab-sweep",
    "moments",
    "hj-order",
    "kg-verify",
    "kernel-consistency",
)

# ---------------------------------------------------------------------------
# Schemas and defaults
# ---------------------------------------------------------------------------

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NON_NEGATIVE = {"type": "number", "minimum": 0}
_NUMBER = {"type": "number"}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_COUNT = {"type": "integer", "minimum": 1}


def _vector(items=None, min_items: int = 1) -> dict:
    return {"type": "array", "items": items or _NUMBER, "minItems": min_items}


def _params(properties: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": properties}


PARAMETER_SCHEMAS: dict[str, dict] = {
    "geometry-check": _params(
        {
            "metrics": _vector({"type": "string"}),
            "points": _COUNT,
            "seed": _SEED,
            "tolerance": _POSITIVE,
        }
    ),
    "extremal": _params(
        {
            "metric": {"type": "string"},
            "x": _vector(),
            "y": _vector(),
            "m": _POSITIVE,
            "tau_span": _POSITIVE,
            "segments": {"type": "integer", "minimum": 3},
            "tolerance": _POSITIVE,
            "flat_tolerance": _POSITIVE,
            "residual_tolerance": _POSITIVE,
            "length_tolerance": _POSITIVE,
            "perturbation_scales": _vector(_POSITIVE, 2),
            "slope_min": _NUMBER,
            "refinement_segments": _vector({"type": "integer", "minimum": 3}, 3),
            "refinement_order_min": _NUMBER,
            "seed": _SEED,
        }
    ),
    "double-slit": _params(
        {
            "d_s": _POSITIVE,
            "d_o": _POSITIVE,
            "p": _POSITIVE,
            "p_ph": _NON_NEGATIVE,
            "delta_p": {"type": ["number", "null"], "minimum": 0},
            "sigma_i": _NUMBER,
            "sigma_f": _NUMBER,
            "flux_term": _NUMBER,
            "n_max": _COUNT,
            "fringe_tolerance": _POSITIVE,
            "spacing_tolerance": _POSITIVE,
            "monte_carlo": {"type": "boolean"},
            "mc_samples": _COUNT,
            "jitter": _NON_NEGATIVE,
            "tol_phase": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": math.pi},
            "workers": {"type": ["integer", "null"], "minimum": 1},
            "seed": _SEED,
        }
    ),
    "ab-sweep": _params(
        {
            "d_s": _POSITIVE,
            "d_o": _POSITIVE,
            "p": _POSITIVE,
            "e": {"type": "number", "not": {"const": 0}},
            "ef_min": _NUMBER,
            "ef_max": _NUMBER,
            "samples": {"type": "integer", "minimum": 2},
            "periodicity_tolerance": _POSITIVE,
            "rate_tolerance": _POSITIVE,
        }
    ),
    "moments": _params(
        {
            "g": _vector(_vector(), 1),
            "m": _POSITIVE,
            "etas": _vector(_POSITIVE, 2),
            "eta_check": _POSITIVE,
            "tolerance": _POSITIVE,
            "quadrature_tolerance": _POSITIVE,
        }
    ),
    "hj-order": _params(
        {
            "metric": {"type": "string"},
            "x": _vector(),
            "m": _POSITIVE,
            "eps": _POSITIVE,
            "xi_norms": _vector(_POSITIVE, 2),
            "direction": _vector(),
            "slope_min": _NUMBER,
            "flat_tolerance": _POSITIVE,
        }
    ),
    "kg-verify": _params(
        {
            "k": _NUMBER,
            "m": _POSITIVE,
            "h": _POSITIVE,
            "ratio_tolerance": _POSITIVE,
            "off_shell_tolerance": _POSITIVE,
            "massless_tolerance": _POSITIVE,
            "flux": _NUMBER,
            "e": _NUMBER,
            "region": _vector(_vector(_NUMBER, 2), 2),
            "covariant_steps": _vector(_POSITIVE, 2),
            "covariant_tolerance": _POSITIVE,
            "invariance_tolerance": _POSITIVE,
            "seed": _SEED,
        }
    ),
    "kernel-consistency": _params(
        {
            "metric": {"type": "string"},
            "nodes": {"type": "integer", "minimum": 8},
            "m": _POSITIVE,
            "wavenumber": {"type": "integer"},
            "eps": _vector(_POSITIVE, 2),
            "eta_ratio": _POSITIVE,
            "tolerance": _POSITIVE,
            "order_min": _NUMBER,
            "dtau": _POSITIVE,
            "steps": {"type": "integer", "minimum": 1},
            "norm_tolerance": _POSITIVE,
        }
    ),
}

DEFAULT_PARAMETERS: dict[str, dict[str, Any]] = {
    "geometry-check": {
        "metrics": ["flat-2", "sphere:2", "hyperbolic2"],
        "points": 100,
        "seed": 7,
        "tolerance": 1e-5,
    },
    "extremal": {
        "metric": "sphere:2",
        "x": [1.0, 0.2],
        "y": [1.4, 0.9],
        "m": 1.0,
        "tau_span": 1.0,
        "segments": 128,
        "tolerance": 1e-4,
        "flat_tolerance": 1e-8,
        "residual_tolerance": 1e-8,
        "length_tolerance": 1e-3,
        "perturbation_scales": [1e-2, 5e-3, 2.5e-3],
        "slope_min": 1.9,
        "refinement_segments": [8, 16, 32, 64],
        "refinement_order_min": 1.8,
        "seed": 11,
    },
    "double-slit": {
        "d_s": 1.0,
        "d_o": 20000.0,
        "p": 1000.0,
        "p_ph": 0.0,
        "delta_p": None,
        "sigma_i": 0.0,
        "sigma_f": 0.0,
        "flux_term": 0.0,
        "n_max": 3,
        "fringe_tolerance": 5e-3,
        "spacing_tolerance": 1e-9,
        "monte_carlo": True,
        "mc_samples": 100000,
        "jitter": 0.5,
        "tol_phase": 0.15,
        "workers": None,
        "seed": 12345,
    },
    "ab-sweep": {
        "d_s": 1.0,
        "d_o": 20000.0,
        "p": 1000.0,
        "e": 1.0,
        "ef_min": 0.0,
        "ef_max": 2.0 * TWO_PI,
        "samples": 64,
        "periodicity_tolerance": 1e-12,
        "rate_tolerance": 1e-9,
    },
    "moments": {
        "g": [[1.0, 0.0], [0.0, 4.0]],
        "m": 1.0,
        "etas": [1e-1, 1e-2, 1e-3],
        "eta_check": 1e-2,
        "tolerance": 1e-3,
        "quadrature_tolerance": 1e-6,
    },
    "hj-order": {
        "metric": "sphere:2",
        "x": [math.pi / 3.0, 0.4],
        "m": 1.0,
        "eps": 0.01,
        "xi_norms": [0.02, 0.04, 0.08],
        "direction": [1.0, 1.0],
        "slope_min": 2.8,
        "flat_tolerance": 1e-10,
    },
    "kg-verify": {
        "k": 1.0,
        "m": 1.0,
        "h": 0.01,
        "ratio_tolerance": 0.1,
        "off_shell_tolerance": 1e-3,
        "massless_tolerance": 1e-8,
        "flux": 3.0,
        "e": 1.0,
        "region": [[1.5, 2.5], [-0.5, 0.5]],
        "covariant_steps": [0.02, 0.01],
        "covariant_tolerance": 0.15,
        "invariance_tolerance": 1e-13,
        "seed": 3,
    },
    "kernel-consistency": {
        "metric": "ring-warp:0.1",
        "nodes": 1024,
        "m": 1.0,
        "wavenumber": 2,
        "eps": [0.02, 0.01, 0.005],
        "eta_ratio": 0.1,
        "tolerance": 0.05,
        "order_min": 0.95,
        "dtau": 1e-3,
        "steps": 100,
        "norm_tolerance": 1e-8,
    },
}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "experiment"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": list(EXPERIMENTS)},
        "parameters": {"type": "object"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string", "minLength": 1},
                "formats": {
                    "type": "array",
                    "items": {"enum": ["csv", "json"]},
                    "uniqueItems": True,
                },
            },
        },
    },
}


def _validate(instance, schema: dict, prefix: str) -> None:
    try:
        jsonschema.validate(instance, schema)
    except jsonschema.ValidationError as e:
        where = ".".join([prefix] * bool(prefix) + [str(p) for p in e.absolute_path])
        raise ConfigError(f"config field '{where or '<root>'}': {e.message}") from e


def default_config(experiment: str) -> dict:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"config field 'experiment': unknown experiment '{experiment}'")
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment,
        "parameters": copy.deepcopy(DEFAULT_PARAMETERS[experiment]),
        "output": {"directory": f"results/{experiment}", "formats": ["csv", "json"]},
    }


def resolve_config(
    experiment: str,
    raw: dict | None = None,
    seed: int | None = None,
    out: str | None = None,
    workers: int | None = None,
) -> dict:
    """Defaults, then the config file, then command-line overrides; validated."""
    resolved = default_config(experiment)
    if raw is not None:
        _validate(raw, CONFIG_SCHEMA, "")
        if raw["experiment"] != experiment:
            raise ConfigError(
                f"config field 'experiment': file describes '{raw['experiment']}', command is '{experiment}'"
            )
        resolved["parameters"].update(raw.get("parameters", {}))
        resolved["output"].update(raw.get("output", {}))
    for flag, value in (("seed", seed), ("workers", workers)):
        if value is None:
            continue
        if flag not in PARAMETER_SCHEMAS[experiment]["properties"]:
            log.warning(f"--{flag} has no effect on '{experiment}'")
        else:
            resolved["parameters"][flag] = value
    if out is not None:
        resolved["output"]["directory"] = out
    _validate(resolved["parameters"], PARAMETER_SCHEMAS[experiment], "parameters")
    _validate(resolved, CONFIG_SCHEMA, "")
    return resolved


# ---------------------------------------------------------------------------
# Checks and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    comparison: str = "<="

    @classmethod
    def at_most(cls, name: str, value: float, tolerance: float) -> Check:
        value = float(value)
        return cls(name, value, float(tolerance), bool(value <= tolerance), "<=")

    @classmethod
    def at_least(cls, name: str, value: float, tolerance: float) -> Check:
        value = float(value)
        return cls(name, value, float(tolerance), bool(value >= tolerance), ">=")

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "pass": self.passed}

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: {self.value:.6g} {self.comparison} {self.tolerance:.6g}"


@dataclass
class ExperimentResult:
    experiment: str
    params: dict
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> dict:
        return {
            "experiment": self.experiment,
            "params": self.params,
            "checks": [c.to_dict() for c in self.checks],
        }


Runner = Callable[[dict, ArtifactWriter], list[Check]]
RUNNERS: dict[str, Runner] = {}


def _runner(name: str):
    def register(fn: Runner) -> Runner:
        RUNNERS[name] = fn
        return fn

    return register


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")


def run_experiment(config: dict, writer: ArtifactWriter | None = None) -> ExperimentResult:
    experiment = config["experiment"]
    params = config["parameters"]
    if writer is None:
        writer = ArtifactWriter(config["output"]["directory"], config["output"]["formats"])
    log.info(f"Running {experiment}")
    checks = RUNNERS[experiment](params, writer)
    result = ExperimentResult(experiment, params, checks)
    writer.write_json("summary.json", result.summary())
    return result


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def _sample_points(name: str, dim: int, rng: np.random.Generator, count: int) -> np.ndarray:
    if name.startswith("sphere"):
        lo, hi = np.array([0.3, 0.0]), np.array([math.pi - 0.3, TWO_PI])
    elif name == "hyperbolic2":
        lo, hi = np.array([-1.0, 0.5]), np.array([1.0, 2.0])
    else:
        lo, hi = -np.ones(dim), np.ones(dim)
    return lo + (hi - lo) * rng.random((count, dim))


@_runner("geometry-check")
def run_geometry_check(params: dict, writer: ArtifactWriter) -> list[Check]:
    rng = np.random.default_rng(params["seed"])
    checks = []
    for metric_id in params["metrics"]:
        metric = resolve_metric(metric_id)
        pts = _sample_points(metric.name, metric.dim, rng, params["points"])
        metric.validate(pts)
        scalar = np.atleast_1d(metric_field(metric, pts).ricci_scalar)
        oracle = np.array([curvature_scalar_oracle(metric, p) for p in pts])
        checks.append(
            Check.at_most(f"curvature_vs_oracle[{metric_id}]", np.max(np.abs(scalar - oracle)), params["tolerance"])
        )
        if metric.name.startswith("sphere:"):
            radius = float(metric.name.partition(":")[2])
            checks.append(
                Check.at_most(
                    f"sphere_scalar[{metric_id}]", np.max(np.abs(scalar - 2.0 / radius**2)), params["tolerance"]
                )
            )
        header = [f"x{i}" for i in range(metric.dim)] + ["R", "R_oracle"]
        writer.write_csv(
            f"curvature_{_slug(metric_id)}.csv",
            header,
            (list(p) + [r, o] for p, r, o in zip(pts, scalar, oracle)),
        )
    return checks


# ---------------------------------------------------------------------------
# Extremals
# ---------------------------------------------------------------------------


@_runner("extremal")
def run_extremal(params: dict, writer: ArtifactWriter) -> list[Check]:
    metric = resolve_metric(params["metric"])
    lag = LagrangianSpec(metric, params["m"])
    x, y = np.asarray(params["x"], dtype=float), np.asarray(params["y"], dtype=float)
    span, segments = params["tau_span"], params["segments"]
    rng = np.random.default_rng(params["seed"])

    flat_lag = LagrangianSpec(flat(metric.dim), params["m"])
    start = straight_path(x, y, span, segments)
    line = find_extremal(flat_lag, x, y, span, segments, init=smooth_perturbation(start, 0.1, rng))
    u = (y - x) / np.linalg.norm(y - x)
    offsets = line.nodes - x
    off_line = offsets - np.outer(offsets @ u, u)
    checks = [Check.at_most("flat_collinearity", np.max(np.linalg.norm(off_line, axis=1)), params["flat_tolerance"])]

    path = find_extremal(lag, x, y, span, segments)
    checks.append(Check.at_most("el_residual", el_residual(path, lag), params["residual_tolerance"]))
    oracle = shoot_geodesic(metric, x, y, span, params=path.params)
    checks.append(
        Check.at_most("oracle_deviation", np.max(np.abs(path.nodes - oracle.nodes)), params["tolerance"])
    )

    base = action(path, lag)
    seed = int(rng.integers(2**32))
    scales = params["perturbation_scales"]
    changes = [
        abs(action(smooth_perturbation(path, s, np.random.default_rng(seed)), lag) - base) for s in scales
    ]
    checks.append(Check.at_least("perturbation_slope", fitted_order(scales, changes), params["slope_min"]))

    levels = sorted(params["refinement_segments"])
    refined = [action(find_extremal(lag, x, y, span, n), lag) for n in levels]
    gaps = np.abs(np.diff(refined))
    if np.min(gaps) <= 1e-12 * max(1.0, abs(refined[-1])):
        log.info("Discrete action is already exact at these segment counts; refinement order not measurable")
        order = math.inf
    else:
        order = fitted_order([span / n for n in levels[:-1]], gaps)
    checks.append(Check.at_least("refinement_order", order, params["refinement_order_min"]))
    writer.write_csv("refinement.csv", ["segments", "action"], zip(levels, refined))

    length = arc_length(oracle, metric)
    homogeneous = homogeneous_action(lag, x, y)
    checks.append(
        Check.at_most(
            "homogeneous_action", abs(homogeneous - params["m"] * length) / (params["m"] * length), params["length_tolerance"]
        )
    )
    writer.write_path("extremal.csv", path)
    writer.write_path("oracle.csv", oracle)
    return checks


# ---------------------------------------------------------------------------
# Interference
# ---------------------------------------------------------------------------


def _setup(params: dict, **overrides) -> TwoPathSetup:
    keys = ("d_s", "d_o", "p", "sigma_i", "sigma_f", "flux_term")
    values = {k: params[k] for k in keys if k in params}
    values.update(overrides)
    return TwoPathSetup(**values)


@_runner("double-slit")
def run_double_slit(params: dict, writer: ArtifactWriter) -> list[Check]:
    setup = _setup(params)
    probe = ScatterProbe(params["p_ph"], params["delta_p"])
    impact = measurement_impact(setup, probe)
    shifted = probed_setup(setup, impact)
    pattern = density_pattern(setup, probe)
    d = setup.fringe_spacing
    orders = range(-params["n_max"], params["n_max"] + 1)
    reach = (params["n_max"] + 1) * d * 1.5

    small = {n: fringe_positions(setup, [n], "small-angle", reach) for n in orders}
    exact = {n: fringe_positions(setup, [n], "exact", reach) for n in orders}
    checks = []
    if probe.delta_p is None:
        # with the averaged transfer p_ph/2, s >= d/2 exactly when d_s p_ph >= 2 pi
        agree = (impact.visibility == 0.0) == impact.which_path
        checks.append(Check.at_least("decoherence_consistency", float(agree), 1.0))

    rel = [
        abs(exact[n][0] - small[n][0]) / abs(small[n][0])
        for n in orders
        if n != 0 and exact[n] and small[n] and small[n][0] != 0.0
    ]
    if len(rel) < 2 * params["n_max"]:
        log.warning(f"only {len(rel)} fringe orders have exact-geometry roots on the screen")
    checks.append(Check.at_most("fringe_exact_vs_small_angle", max(rel, default=math.inf), params["fringe_tolerance"]))
    line = np.array([small[n][0] for n in orders if small[n]])
    spacing = float(np.max(np.abs(np.diff(line) / d - 1.0))) if line.size > 1 else math.inf
    checks.append(Check.at_most("fringe_spacing", spacing, params["spacing_tolerance"]))

    writer.write_csv("pattern.csv", ["x_hat", "density"], zip(pattern.x_hat, pattern.density))
    writer.write_csv(
        "maxima.csv",
        ["n", "small_angle", "exact"],
        ([n, small[n][0] if small[n] else math.nan, exact[n][0] if exact[n] else math.nan] for n in orders),
    )

    if params["monte_carlo"] and impact.visibility > 0.0:
        sampler = MCSampler(
            seed=params["seed"],
            jitter_scale=params["jitter"],
            samples=params["mc_samples"],
            tol_phase=params["tol_phase"],
            workers=params["workers"],
        )
        hist = mc_density(shifted, sampler)
        inner = shifted.screen_half_width - 0.5 * d
        expected = [x for x in fringe_positions(shifted, mode="exact") if abs(x) <= inner]
        modes = histogram_modes(hist, shifted, expected)
        misses = [abs(a - b) / hist.width if math.isfinite(a) else math.inf for a, b in zip(modes, expected)]
        checks.append(Check.at_most("mc_mode_offset_bins", max(misses, default=math.inf), 1.0))
        writer.write_csv(
            "mc_histogram.csv", ["x_hat", "count", "density"], zip(hist.centers, hist.counts, hist.density)
        )
    elif params["monte_carlo"]:
        log.info("Visibility is zero; skipping the trajectory-counting cross-check")
    return checks


@_runner("ab-sweep")
def run_ab_sweep(params: dict, writer: ArtifactWriter) -> list[Check]:
    setup = _setup(params)
    efs = np.linspace(params["ef_min"], params["ef_max"], params["samples"])
    x = setup.screen()
    rows = []
    worst_density = 0.0
    worst_shift = 0.0
    for ef in efs:
        here = _setup(params, flux_term=float(ef))
        there = _setup(params, flux_term=float(ef) + TWO_PI)
        d_here = density_pattern(here, x_hat=x).density
        d_there = density_pattern(there, x_hat=x).density
        worst_density = max(worst_density, float(np.max(np.abs(d_here - d_there))))
        shift = central_maximum(here)
        gap = (shift - central_maximum(there)) / setup.fringe_spacing
        # at e f = pi (mod 2 pi) two maxima are equally central
        worst_shift = max(worst_shift, abs(gap - round(gap)))
        centre = float(density_pattern(here, x_hat=np.array([0.0])).density[0])
        rows.append([ef, ef / params["e"], shift, centre])

    step = 0.5
    rate = (central_maximum(_setup(params, flux_term=step)) - central_maximum(_setup(params, flux_term=0.0))) / step
    expected = flux_shift_rate(setup)
    at_max = float(density_pattern(_setup(params, flux_term=0.0), x_hat=np.array([0.0])).density[0])
    at_min = float(density_pattern(_setup(params, flux_term=math.pi), x_hat=np.array([0.0])).density[0])

    checks = [
        Check.at_most("density_periodicity", worst_density, params["periodicity_tolerance"]),
        Check.at_most("shift_periodicity", worst_shift, params["periodicity_tolerance"]),
        Check.at_most("shift_rate", abs(rate - expected) / abs(expected), params["rate_tolerance"]),
        Check.at_most("maximum_at_zero_flux", abs(at_max - 2.0), params["periodicity_tolerance"]),
        Check.at_most("minimum_at_pi_flux", abs(at_min), params["periodicity_tolerance"]),
    ]
    writer.write_csv("ab_sweep.csv", ["ef", "flux", "shift", "central_density"], rows)
    return checks


# ---------------------------------------------------------------------------
# Propagator
# ---------------------------------------------------------------------------


@_runner("moments")
def run_moments(params: dict, writer: ArtifactWriter) -> list[Check]:
    g = np.asarray(params["g"], dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ConfigError(f"config field 'parameters.g': expected a square matrix, got shape {g.shape}")
    m = params["m"]
    closed = moments_closed_form(g, m, params["eta_check"])
    quad = moments_quadrature(g, m, params["eta_check"])
    limit = moments_eta_limit(g, m, params["etas"])
    target = 0.5j * np.linalg.inv(g) / m
    off = ~np.eye(g.shape[0], dtype=bool)
    checks = [
        Check.at_most("closed_form_Q", abs(closed.Q - 1.0), 1e-15),
        Check.at_most("closed_form_Q_vec", np.max(np.abs(closed.Q_vec)), 1e-15),
        Check.at_most("quadrature_Q", abs(quad.Q - 1.0), params["quadrature_tolerance"]),
        Check.at_most("quadrature_Q_vec", np.max(np.abs(quad.Q_vec)), 1e-8),
        Check.at_most("extrapolated_Q_mat", np.max(np.abs(limit.Q_mat - target)), params["tolerance"]),
        Check.at_most(
            "extrapolated_off_diagonal",
            np.max(np.abs(limit.Q_mat[off]), initial=0.0),
            params["quadrature_tolerance"],
        ),
    ]

    rows = []
    for eta in params["etas"]:
        s = moments_quadrature(g, m, eta)
        rows.append([eta, s.Q.real, s.Q.imag] + [v for z in s.Q_mat.ravel() for v in (z.real, z.imag)])
    rows.append([0.0, limit.Q.real, limit.Q.imag] + [v for z in limit.Q_mat.ravel() for v in (z.real, z.imag)])
    n = g.shape[0]
    header = ["eta", "Q_re", "Q_im"] + [
        f"Q{i}{j}_{part}" for i in range(1, n + 1) for j in range(1, n + 1) for part in ("re", "im")
    ]
    writer.write_csv("moments.csv", header, rows)
    return checks


@_runner("hj-order")
def run_hj_order(params: dict, writer: ArtifactWriter) -> list[Check]:
    metric = resolve_metric(params["metric"])
    x = np.asarray(params["x"], dtype=float)
    m, eps, norms = params["m"], params["eps"], params["xi_norms"]
    u = np.asarray(params["direction"], dtype=float)
    if u.size != metric.dim:
        raise ConfigError(f"config field 'parameters.direction': needs {metric.dim} components")
    u = u / np.linalg.norm(u)

    flat_exp = HJExpansion.at(flat(metric.dim), x, m)
    flat_worst = max(hj_residual(flat_exp, r * u, eps) for r in norms)
    choice = select_expansion(metric, x, m, eps, norms, u)
    chosen_default = (choice.variant, choice.a_sign, choice.cubic_sign) == (
        SELECTED_A_VARIANT,
        SELECTED_A_SIGN,
        SELECTED_CUBIC_SIGN,
    )
    log.info(f"Selected expansion {choice.variant} (A sign {choice.a_sign:+.0f}, cubic sign {choice.cubic_sign:+.0f})")

    rows = []
    for key in sorted(choice.slopes):
        variant, a_sign, cubic_sign = key.split("/")
        exp = HJExpansion.at(metric, x, m, variant, float(a_sign), float(cubic_sign))
        rows.extend([key, r, hj_residual(exp, r * u, eps)] for r in norms)
    writer.write_csv("hj_residuals.csv", ["variant", "xi_norm", "residual"], rows)
    return [
        Check.at_most("flat_residual", flat_worst, params["flat_tolerance"]),
        Check.at_least("selected_slope", choice.slope, params["slope_min"]),
        Check.at_least("selected_is_builtin", 1.0 if chosen_default else 0.0, 1.0),
    ]


@_runner("kg-verify")
def run_kg_verify(params: dict, writer: ArtifactWriter) -> list[Check]:
    k, m, h = params["k"], params["m"], params["h"]
    omega = math.sqrt(k * k + m * m)
    steps = [h, 0.5 * h]
    on_shell = [plane_wave_residual(k, omega, m, s) for s in steps]
    off_shell = [plane_wave_residual(k, k, m, s) for s in steps]
    massless = [plane_wave_residual(k, abs(k), 0.0, s) for s in steps]
    gap = m * m
    writer.write_csv(
        "kg_residuals.csv", ["h", "on_shell", "off_shell", "massless"], zip(steps, on_shell, off_shell, massless)
    )
    checks = [
        Check.at_most("on_shell_order", abs(on_shell[0] / on_shell[1] / 4.0 - 1.0), params["ratio_tolerance"]),
        Check.at_most("off_shell_gap", abs(off_shell[1] - gap) / gap, params["off_shell_tolerance"]),
        Check.at_most("massless_residual", max(massless), params["massless_tolerance"]),
    ]

    field = EMField.solenoid(params["flux"], params["e"])
    (x_lo, x_hi), (y_lo, y_hi) = params["region"]
    reference = np.array([x_lo, 0.5 * (y_lo + y_hi)])
    phase = branch_phase_field(field, reference)
    covariant = []
    for step in params["covariant_steps"]:
        axes = (np.arange(x_lo, x_hi + 0.5 * step, step), np.arange(y_lo, y_hi + 0.5 * step, step))
        psi0 = WaveField.from_function(
            flat(2), axes, lambda p: np.exp(1j * (p[..., 0] + 0.5 * p[..., 1])), boundary="dirichlet"
        )
        covariant.append(covariant_identity_residual(field, psi0, phase, step))
    ratio = covariant[0] / covariant[1]
    refinement = (params["covariant_steps"][0] / params["covariant_steps"][1]) ** 2
    checks.append(Check.at_most("covariant_identity_order", abs(ratio / refinement - 1.0), params["covariant_tolerance"]))
    writer.write_csv("covariant_identity.csv", ["h", "residual"], zip(params["covariant_steps"], covariant))

    rng = np.random.default_rng(params["seed"])
    sphere = resolve_metric("sphere:2")
    axes = (np.linspace(0.5, math.pi - 0.5, 24), ring_axis(32))
    psi = WaveField(axes, rng.standard_normal((24, 32)) + 1j * rng.standard_normal((24, 32)), sphere, "dirichlet")
    kappa = np.exp(1j * rng.uniform(-math.pi, math.pi, psi.shape))
    base = born_density(psi)
    moved = born_density(apply_gauge(psi, kappa))
    checks.append(
        Check.at_most("born_density_invariance", np.max(np.abs(moved - base)) / np.max(base), params["invariance_tolerance"])
    )
    smooth = WaveField.from_function(sphere, axes, lambda p: np.cos(p[..., 0]) * np.exp(1j * p[..., 1]), "dirichlet")
    constant = np.exp(1j * rng.uniform(-math.pi, math.pi))
    plain = kg_residual(smooth, m)
    rotated = kg_residual(apply_gauge(smooth, np.full(smooth.shape, constant)), m)
    checks.append(
        Check.at_most("kg_constant_gauge", abs(rotated - plain) / max(plain, 1e-300), params["invariance_tolerance"])
    )
    return checks


@_runner("kernel-consistency")
def run_kernel_consistency(params: dict, writer: ArtifactWriter) -> list[Check]:
    metric = resolve_metric(params["metric"])
    if metric.dim != 1:
        raise ConfigError(f"config field 'parameters.metric': kernel consistency needs a 1D metric, got dim {metric.dim}")
    m = params["m"]
    axis = ring_axis(params["nodes"])
    field = WaveField.from_function(metric, (axis,), lambda p: np.exp(1j * params["wavenumber"] * p[..., 0]))
    primed = primed_values(field)
    target = -1j * np.sqrt(metric.g(axis[:, None])[:, 0, 0]) * schrodinger_rhs(field, m).values
    scale = float(np.max(np.abs(target)))

    rows = []
    discrepancies = []
    for eps in params["eps"]:
        eta = params["eta_ratio"] * eps
        stepped = kernel_step(field, m, eps, eta)
        quotient = (stepped.values - primed) / eps
        rel = float(np.max(np.abs(quotient - target))) / scale
        discrepancies.append(rel)
        rows.append([eps, eta, rel])
        log.debug(f"Kernel step eps={eps:g}: relative discrepancy {rel:.4e}")
    writer.write_csv("kernel.csv", ["eps", "eta", "discrepancy"], rows)

    smallest = int(np.argmin(params["eps"]))
    coarse = WaveField.from_function(metric, (ring_axis(128),), lambda p: np.exp(1j * params["wavenumber"] * p[..., 0]))
    before = invariant_norm(coarse)
    after = invariant_norm(evolve_tau(coarse, m, params["dtau"], params["steps"]))
    return [
        Check.at_most("kernel_discrepancy", discrepancies[smallest], params["tolerance"]),
        Check.at_least("kernel_order", fitted_order(params["eps"], discrepancies), params["order_min"]),
        Check.at_most("norm_drift", abs(after - before) / before, params["norm_tolerance"]),
    ]
