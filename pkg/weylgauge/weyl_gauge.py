"""Length transport, assigned gauges and the physical-path condition."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from . import constants
from .errors import ConfigError, InvalidPathError, NonContinuingError
from .paths_action import (
    GaugePotential,
    LagrangianSpec,
    Path,
    action,
    line_integral,
    segment_actions,
    smooth_perturbation,
)
from .utils import TWO_PI, winding_index, wrap_phase

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeylTransport:
    """l(y) = l(x) exp[a * integral of phi'_mu dx^mu]."""

    a: complex
    potential: GaugePotential


@dataclass(frozen=True)
class AssignedGauge:
    """kappa(x) = exp(-i sigma(x)); sigma takes points of shape (..., N)."""

    sigma: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    name: str = "custom"

    @classmethod
    def constant(cls, value: float) -> AssignedGauge:
        return cls(lambda x: np.full(np.shape(x)[:-1], float(value)), name=f"constant:{value:g}")

    def phase(self, x):
        value = np.asarray(self.sigma(np.asarray(x, dtype=float)), dtype=float)
        return float(value) if value.ndim == 0 else value

    def kappa(self, x):
        value = np.exp(-1j * np.asarray(self.phase(x)))
        return complex(value) if value.ndim == 0 else value

    def gradient(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        h = constants.GRADIENT_STEP
        cols = []
        for lam in range(pts.shape[-1]):
            e = np.zeros(pts.shape[-1])
            e[lam] = h
            cols.append((np.asarray(self.sigma(pts + e)) - np.asarray(self.sigma(pts - e))) / (2.0 * h))
        return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class PhaseVerdict:
    is_physical: bool
    n: int
    residual: float

    def to_dict(self) -> dict:
        return {"is_physical": self.is_physical, "n": self.n, "residual": self.residual}


def london_transport(e: float, potential: GaugePotential) -> WeylTransport:
    """Transport with a phi'_mu = -i e phi_mu."""
    return WeylTransport(a=-1j * e, potential=potential)


# ---------------------------------------------------------------------------
# Transport
# ---------------------------------------------------------------------------


def transport_length(l0: complex, path: Path, t: WeylTransport) -> complex:
    return complex(l0 * np.exp(t.a * line_integral(path, t.potential)))


def recalibration_residual(
    l0: complex, path: Path, t: WeylTransport, gauge: AssignedGauge
) -> float:
    """|transport with a phi' + kappa^-1 d kappa  -  kappa(y) l(y) kappa^-1(x)|.

    Both sides use the midpoint rule; kappa^-1 d_mu kappa = -i d_mu sigma is
    taken from central differences of sigma.
    """
    t.potential.check_path(path)
    mid = path.midpoints
    dx = path.displacements
    connection = t.a * t.potential(mid) - 1j * gauge.gradient(mid)
    lhs = l0 * np.exp(np.einsum("ij,ij->", connection, dx))
    rhs = gauge.kappa(path.end) * transport_length(l0, path, t) / gauge.kappa(path.start)
    return float(abs(lhs - rhs))


# ---------------------------------------------------------------------------
# Physical paths
# ---------------------------------------------------------------------------


def physical_check(
    total_action: float, sigma_x: float, sigma_y: float, tol_phase: float | None = None
) -> PhaseVerdict:
    tol_phase = constants.PHASE_TOLERANCE if tol_phase is None else tol_phase
    if not 0.0 < tol_phase < math.pi:
        raise ConfigError(f"tol_phase must lie in (0, pi), got {tol_phase}")
    phi = total_action - sigma_y + sigma_x
    residual = wrap_phase(phi)
    return PhaseVerdict(
        is_physical=bool(abs(residual) < tol_phase),
        n=winding_index(phi),
        residual=float(residual),
    )


def path_phase(path: Path, lag: LagrangianSpec, gauge: AssignedGauge | None = None) -> float:
    """S(path) - sigma(end) + sigma(start)."""
    total = action(path, lag)
    if gauge is None:
        return total
    return total - gauge.phase(path.end) + gauge.phase(path.start)


def running_action(path: Path, lag: LagrangianSpec) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(segment_actions(path, lag))])


def is_monotonic(path: Path, lag: LagrangianSpec) -> bool:
    steps = segment_actions(path, lag)
    tol = constants.MONOTONIC_TOLERANCE
    return bool(np.all(steps > tol) or np.all(steps < -tol))


def is_elemental(path: Path, lag: LagrangianSpec, tol_phase: float | None = None) -> bool:
    tol_phase = constants.PHASE_TOLERANCE if tol_phase is None else tol_phase
    if not is_monotonic(path, lag):
        return False
    return abs(abs(action(path, lag)) - TWO_PI) <= tol_phase


def continuing_union(p1: Path, p2: Path) -> Path:
    gap = float(np.max(np.abs(p1.end - p2.start)))
    if gap > constants.ENDPOINT_TOLERANCE:
        raise NonContinuingError(
            f"terminal node {tuple(p1.end)} does not meet initial node {tuple(p2.start)} (gap {gap:.3e})"
        )
    p2 = p2.shifted(p1.params[-1] - p2.params[0])
    return Path(
        np.vstack([p1.nodes, p2.nodes[1:]]),
        np.concatenate([p1.params, p2.params[1:]]),
    )


def _sub_segment(a, b, ta, tb, r) -> Path:
    return Path([a, a + r * (b - a)], [ta, ta + r * (tb - ta)])


def elemental_split(
    path: Path, lag: LagrangianSpec, tol_phase: float | None = None
) -> tuple[list[Path], Path | None]:
    """Cut a monotonic path into consecutive pieces of action magnitude 2 pi.

    Cut points inside a segment are found by root-finding on the fraction of
    that segment. Returns the pieces and the remainder (None when the last
    cut lands on the final node).
    """
    tol_phase = constants.PHASE_TOLERANCE if tol_phase is None else tol_phase
    if not is_monotonic(path, lag):
        raise InvalidPathError("elemental split needs a path with monotonic running action")
    sign = 1.0 if action(path, lag) > 0.0 else -1.0

    pieces: list[Path] = []
    nodes = [path.nodes[0]]
    params = [path.params[0]]
    acc = 0.0
    for i in range(path.n_segments):
        b, tb = path.nodes[i + 1], path.params[i + 1]
        while True:
            a, ta = nodes[-1], params[-1]
            s = sign * action(Path([a, b], [ta, tb]), lag)
            if acc + s < TWO_PI - tol_phase:
                nodes.append(b)
                params.append(tb)
                acc += s
                break
            if acc + s <= TWO_PI + tol_phase:
                nodes.append(b)
                params.append(tb)
                pieces.append(Path(nodes, params))
                nodes, params, acc = [b], [tb], 0.0
                break
            base = acc
            r = optimize.brentq(
                lambda r: base + sign * action(_sub_segment(a, b, ta, tb, r), lag) - TWO_PI,
                1e-15,
                1.0,
                xtol=1e-15,
            )
            cut = _sub_segment(a, b, ta, tb, r)
            nodes.append(cut.end)
            params.append(cut.params[-1])
            pieces.append(Path(nodes, params))
            nodes, params, acc = [cut.end], [cut.params[-1]], 0.0
    remainder = Path(nodes, params) if len(nodes) > 1 else None
    log.debug(f"Elemental split: {len(pieces)} pieces, remainder action {sign * acc:.6g}")
    return pieces, remainder


def gauge_from_reference(sigma_x: float, reference_path: Path, lag: LagrangianSpec) -> float:
    """sigma(y) making the reference path physical with zero residual."""
    return sigma_x + action(reference_path, lag)


def concentration_fraction(
    base: Path,
    lag: LagrangianSpec,
    jitter: float,
    samples: int,
    tol: float,
    seed: int,
) -> float:
    """Fraction of smoothly perturbed copies of ``base`` whose action stays within tol."""
    rng = np.random.default_rng(seed)
    reference = action(base, lag)
    hits = 0
    for _ in range(samples):
        trial = smooth_perturbation(base, jitter, rng)
        if abs(action(trial, lag) - reference) < tol:
            hits += 1
    return hits / samples
