"""Charged Klein-Gordon identities in the flat punctured plane."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import constants
from .errors import ConfigError, InvalidRegionError, NonContinuingError
from .metric_catalog import minkowski
from .paths_action import GaugePotential, Path, line_integral, polygon_path, solenoid
from .propagator import WaveField, kg_residual
from .utils import TWO_PI, wrap_phase

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EMField:
    potential: GaugePotential
    e: float = 1.0

    @classmethod
    def solenoid(cls, flux: float, e: float = 1.0, center=(0.0, 0.0)) -> EMField:
        return cls(solenoid(flux, center), e)

    @property
    def enclosed_flux(self) -> float:
        """Line integral once around the puncture (0 without one)."""
        if self.potential.puncture is None:
            return 0.0
        c = np.asarray(self.potential.puncture)
        r = 0.5
        loop = polygon_path(c + r * np.array([[1, 0], [1, 1], [-1, 1], [-1, -1], [1, -1]]), 1)
        return line_integral(loop, self.potential, exact=True)


@dataclass(frozen=True)
class BranchSolution:
    """psi_0 continued along one branch: psi = psi_0 exp(-i e S)."""

    base: WaveField
    branch_path: Path
    phase_field: np.ndarray
    e: float

    @property
    def values(self) -> np.ndarray:
        return self.base.values * np.exp(-1j * self.e * self.phase_field)

    def as_field(self) -> WaveField:
        return self.base.with_values(self.values)


def gauge_shifted(
    field: EMField,
    scalar: Callable[[np.ndarray], np.ndarray],
    gradient: Callable[[np.ndarray], np.ndarray] | None = None,
) -> EMField:
    """phi -> phi + d(Lambda); the puncture and exact segment integrals carry over."""
    base = field.potential
    dim = base.dim

    def d_scalar(x):
        if gradient is not None:
            return gradient(x)
        h = constants.GRADIENT_STEP
        cols = []
        for lam in range(dim):
            e = np.zeros(dim)
            e[lam] = h
            cols.append((scalar(x + e) - scalar(x - e)) / (2.0 * h))
        return np.stack(cols, axis=-1)

    segment = None
    if base.segment_integral is not None:
        inner = base.segment_integral

        def segment(a, b):
            return inner(a, b) + scalar(b) - scalar(a)

    shifted = GaugePotential(
        components=lambda x: base(x) + d_scalar(x),
        dim=dim,
        name=f"{base.name}+dLambda",
        segment_integral=segment,
        puncture=base.puncture,
    )
    return EMField(shifted, field.e)


# ---------------------------------------------------------------------------
# Line-integral phases
# ---------------------------------------------------------------------------


def line_integral_phase(path: Path, field: EMField, exact: bool = True) -> float:
    """S(rho) = integral of phi_mu dx^mu along the path.

    Uses the potential's exact segment primitive when it has one; the
    midpoint rule otherwise or with ``exact=False``.
    """
    return line_integral(path, field.potential, exact=exact)


def two_branch_phase(rho1: Path, rho2: Path, field: EMField) -> float:
    tol = constants.ENDPOINT_TOLERANCE
    for label, a, b in (("initial", rho1.start, rho2.start), ("terminal", rho1.end, rho2.end)):
        gap = float(np.max(np.abs(a - b)))
        if gap > tol:
            raise NonContinuingError(f"branches do not share their {label} node (gap {gap:.3e})")
    return field.e * (line_integral_phase(rho1, field) - line_integral_phase(rho2, field))


def intensity_at_meeting(psi0, ef):
    """|psi_1 + psi_2|^2 where the branches differ by the phase e f."""
    psi0 = np.asarray(psi0, dtype=complex)
    value = np.abs(psi0 * (1.0 + np.exp(-1j * np.asarray(ef, dtype=float)))) ** 2
    return float(value) if np.ndim(value) == 0 else value


def branch_phase_field(
    field: EMField, reference, cut_angle: float | None = None
) -> Callable[[np.ndarray], np.ndarray]:
    """S(x) from ``reference`` on the plane cut along a ray from the puncture.

    Straight segments from the reference give S up to whole fluxes; the cut
    fixes which multiple applies. Without a puncture the cut is irrelevant.
    """
    ref = np.asarray(reference, dtype=float)
    potential = field.potential
    if potential.segment_integral is None:
        raise ConfigError(f"potential '{potential.name}' has no exact segment integral for a phase field")
    if potential.puncture is None:
        return lambda x: np.asarray(potential.segment_integral(ref, np.asarray(x, dtype=float)))

    c = np.asarray(potential.puncture, dtype=float)
    if cut_angle is None:
        r = ref - c
        cut_angle = math.atan2(-r[1], -r[0])
    flux = field.enclosed_flux

    def cut_theta(x):
        r = x - c
        return cut_angle + np.mod(np.arctan2(r[..., 1], r[..., 0]) - cut_angle, TWO_PI)

    theta_ref = cut_theta(ref)

    def phase(x):
        x = np.asarray(x, dtype=float)
        straight = potential.segment_integral(np.broadcast_to(ref, x.shape), x)
        r = x - c
        subtended = wrap_phase(np.arctan2(r[..., 1], r[..., 0]) - math.atan2(ref[1] - c[1], ref[0] - c[0]))
        winds = np.rint((cut_theta(x) - theta_ref - subtended) / TWO_PI)
        return straight + winds * flux

    return phase


def branch_solution(field: EMField, psi0: WaveField, branch_path: Path, cut_angle: float | None = None) -> BranchSolution:
    """Continue psi_0 over its lattice so S equals the path integral at the path's end."""
    s_path = line_integral_phase(branch_path, field)
    local = branch_phase_field(field, branch_path.end, cut_angle)
    return BranchSolution(
        base=psi0,
        branch_path=branch_path,
        phase_field=s_path + np.asarray(local(psi0.points)),
        e=field.e,
    )


# ---------------------------------------------------------------------------
# Differential identities
# ---------------------------------------------------------------------------


def _check_region(field: EMField, psi0: WaveField) -> None:
    if field.potential.puncture is None:
        return
    c = np.asarray(field.potential.puncture)
    h = np.asarray(psi0.spacing)
    lo = np.array([a.min() for a in psi0.axes]) - h
    hi = np.array([a.max() for a in psi0.axes]) + h
    if np.all((c >= lo) & (c <= hi)):
        raise InvalidRegionError(
            f"sampled region [{lo.tolist()}, {hi.tolist()}] touches the puncture at {tuple(c)}"
        )


def covariant_identity_residual(
    field: EMField, psi0: WaveField, path_phase: Callable[[np.ndarray], np.ndarray], h: float | None = None
) -> float:
    """max |(d + i e phi)(psi_0 e^{-i e S}) - e^{-i e S} d psi_0| at interior nodes.

    Derivatives are central differences on psi_0's lattice, whose spacing is h.
    """
    if h is not None and not np.allclose(psi0.spacing, h, rtol=1e-9, atol=0.0):
        raise ConfigError(f"step h = {h} does not match the lattice spacing {psi0.spacing}")
    _check_region(field, psi0)
    pts = psi0.points
    e = field.e
    rotor = np.exp(-1j * e * np.asarray(path_phase(pts)))
    charged = psi0.values * rotor
    phi = field.potential(pts)

    worst = 0.0
    inner = tuple(slice(1, -1) for _ in psi0.shape)
    for mu, step in enumerate(psi0.spacing):
        plus = tuple(slice(2, None) if k == mu else slice(1, -1) for k in range(len(psi0.shape)))
        minus = tuple(slice(None, -2) if k == mu else slice(1, -1) for k in range(len(psi0.shape)))
        d_charged = (charged[plus] - charged[minus]) / (2.0 * step)
        d_base = (psi0.values[plus] - psi0.values[minus]) / (2.0 * step)
        residual = d_charged + 1j * e * phi[inner + (mu,)] * charged[inner] - rotor[inner] * d_base
        worst = max(worst, float(np.max(np.abs(residual))))
    return worst


def plane_wave_residual(
    k: Sequence[float] | float,
    omega: float,
    m: float,
    h: float = 0.01,
    nodes: int = 9,
) -> float:
    """KG residual of exp(i(k.x - omega t)) on a small Minkowski lattice of step h."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    metric = minkowski(1 + k.size)
    axes = [h * np.arange(nodes) for _ in range(1 + k.size)]
    field = WaveField.from_function(
        metric,
        axes,
        lambda x: np.exp(1j * (np.einsum("...i,i->...", x[..., 1:], k) - omega * x[..., 0])),
        boundary="dirichlet",
    )
    residual = kg_residual(field, m)
    log.debug(f"Plane wave k={k.tolist()}, omega={omega:g}, m={m:g}, h={h:g}: residual {residual:.3e}")
    return residual