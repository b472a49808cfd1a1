"""Metric jets on a coordinate chart.

Index layout used throughout the package (leading axes are batch axes):

    g[..., m, n]             g_mn
    dg[..., l, m, n]         d_l g_mn
    d2g[..., l, k, m, n]     d_l d_k g_mn
    gamma_first[..., m, n, a]    first kind, symmetric in (m, n), lowered index last
    gamma_second[..., l, m, n]   second kind, upper index first
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np

from . import constants
from .errors import DegenerateMetricError, InvalidMetricError

log = logging.getLogger(__name__)

DerivativeMode = Literal["analytic", "central-difference"]
Signature = Literal["positive-definite", "lorentzian"]
ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ChartMetric:
    """A metric on a single coordinate chart.

    ``components`` must accept points with arbitrary leading batch axes,
    shape ``(..., dim)``, and return ``(..., dim, dim)``. Analytic charts also
    supply ``partials`` and ``second_partials`` in the layout above.
    """

    dim: int
    components: ArrayFn
    derivative_mode: DerivativeMode = "central-difference"
    signature: Signature = "positive-definite"
    partials: ArrayFn | None = None
    second_partials: ArrayFn | None = None
    h_metric: float | None = None
    h_second: float | None = None
    name: str = "custom"
    domain: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidMetricError(f"{self.name}: dim must be a positive integer, got {self.dim}")
        if self.derivative_mode == "analytic" and (
            self.partials is None or self.second_partials is None
        ):
            raise InvalidMetricError(
                f"{self.name}: analytic derivative mode needs partials and second_partials"
            )
        if self.h_metric is not None and self.h_metric <= 0.0:
            raise InvalidMetricError(f"{self.name}: h_metric must be > 0")
        if self.h_second is not None and self.h_second <= 0.0:
            raise InvalidMetricError(f"{self.name}: h_second must be > 0")

    @property
    def step(self) -> float:
        return constants.METRIC_STEP if self.h_metric is None else self.h_metric

    @property
    def second_step(self) -> float:
        return constants.METRIC_SECOND_STEP if self.h_second is None else self.h_second

    def _points(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        if pts.shape[-1:] != (self.dim,):
            raise InvalidMetricError(
                f"{self.name}: point has trailing dimension {pts.shape[-1:]}, expected {self.dim}"
            )
        if self.domain is not None and not np.all(self.domain(pts)):
            raise InvalidMetricError(f"{self.name}: point lies outside the chart's valid region")
        return pts

    def g(self, x) -> np.ndarray:
        pts = self._points(x)
        return np.asarray(self.components(pts), dtype=float)

    def dg(self, x) -> np.ndarray:
        pts = self._points(x)
        if self.derivative_mode == "analytic":
            assert self.partials is not None
            return np.asarray(self.partials(pts), dtype=float)
        h = self.step
        slices = []
        for lam in range(self.dim):
            e = np.zeros(self.dim)
            e[lam] = h
            slices.append((self.components(pts + e) - self.components(pts - e)) / (2.0 * h))
        return np.stack(slices, axis=-3)

    def d2g(self, x) -> np.ndarray:
        pts = self._points(x)
        if self.derivative_mode == "analytic":
            assert self.second_partials is not None
            return np.asarray(self.second_partials(pts), dtype=float)
        h = self.second_step
        n = self.dim
        center = self.components(pts)
        out = np.empty(pts.shape[:-1] + (n, n, n, n))
        for lam in range(n):
            e_l = np.zeros(n)
            e_l[lam] = h
            out[..., lam, lam, :, :] = (
                self.components(pts + e_l) - 2.0 * center + self.components(pts - e_l)
            ) / h**2
            for eta in range(lam + 1, n):
                e_k = np.zeros(n)
                e_k[eta] = h
                mixed = (
                    self.components(pts + e_l + e_k)
                    - self.components(pts + e_l - e_k)
                    - self.components(pts - e_l + e_k)
                    + self.components(pts - e_l - e_k)
                ) / (4.0 * h**2)
                out[..., lam, eta, :, :] = mixed
                out[..., eta, lam, :, :] = mixed
        return out

    def validate(self, points) -> None:
        """Check symmetry and signature at sample points; raises InvalidMetricError."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = self.g(pts)
        _check_symmetric(g, self.name)
        if self.signature == "positive-definite":
            for k in range(1, self.dim + 1):
                minors = np.linalg.det(g[..., :k, :k])
                if np.any(minors <= 0.0):
                    raise InvalidMetricError(
                        f"{self.name}: leading principal minor of order {k} is not positive"
                    )
        else:
            eig = np.linalg.eigvalsh(g)
            positive = np.sum(eig > 0.0, axis=-1)
            negative = np.sum(eig < 0.0, axis=-1)
            complete = (positive + negative) == self.dim
            one_flip = (positive == 1) | (negative == 1)
            if not np.all(complete & one_flip):
                raise InvalidMetricError(
                    f"{self.name}: spectrum is not lorentzian at every sampled point"
                )

    def pulled_back(self, matrix, offset=None) -> ChartMetric:
        """Metric in coordinates x' with x = matrix @ x' + offset."""
        a = np.asarray(matrix, dtype=float)
        if a.shape != (self.dim, self.dim) or abs(np.linalg.det(a)) < constants.DEGENERATE_TOLERANCE:
            raise InvalidMetricError(f"{self.name}: affine change needs an invertible {self.dim}x{self.dim} matrix")
        b = np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=float)
        base = self.components

        def components(xp: np.ndarray) -> np.ndarray:
            x = np.einsum("ij,...j->...i", a, xp) + b
            return np.einsum("ki,...kl,lj->...ij", a, base(x), a)

        return replace(
            self,
            components=components,
            derivative_mode="central-difference",
            partials=None,
            second_partials=None,
            name=f"{self.name}|affine",
            domain=None,
        )


@dataclass(frozen=True)
class GeometryJet:
    point: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    det_g: np.ndarray | float
    gamma_first: np.ndarray
    gamma_second: np.ndarray
    theta: np.ndarray
    a_tensor: np.ndarray
    ricci_scalar: np.ndarray | float


# ---------------------------------------------------------------------------
# Tensor algebra
# ---------------------------------------------------------------------------


def _check_symmetric(g: np.ndarray, name: str) -> None:
    tol = constants.SYMMETRY_TOLERANCE
    asym = np.max(np.abs(g - np.swapaxes(g, -1, -2)), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(g), initial=0.0)))
    if asym > tol * scale:
        raise InvalidMetricError(f"{name}: metric components are not symmetric (gap {asym:.3e})")


def _checked_inverse(g: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    _check_symmetric(g, name)
    det = np.linalg.det(g)
    if np.any(np.abs(det) < constants.DEGENERATE_TOLERANCE):
        raise DegenerateMetricError(f"{name}: metric is degenerate (|det g| < {constants.DEGENERATE_TOLERANCE:g})")
    return np.linalg.inv(g), det


def christoffel_first(dg: np.ndarray) -> np.ndarray:
    """Gamma_{mna} = (d_n g_ma + d_m g_na - d_a g_mn) / 2."""
    return 0.5 * (
        np.einsum("...nma->...mna", dg)
        + dg
        - np.einsum("...amn->...mna", dg)
    )


def raise_first_kind(g_inv: np.ndarray, gamma_first: np.ndarray) -> np.ndarray:
    return np.einsum("...la,...mna->...lmn", g_inv, gamma_first)


def christoffel_second(metric: ChartMetric, x) -> np.ndarray:
    """Gamma^l_{mn} at x from first derivatives of the metric only."""
    g = metric.g(x)
    g_inv, _ = _checked_inverse(g, metric.name)
    return raise_first_kind(g_inv, christoffel_first(metric.dg(x)))


def theta_vector(g_inv: np.ndarray, gamma_first: np.ndarray) -> np.ndarray:
    """Theta_m = g^{nl} Gamma_{mnl}."""
    return np.einsum("...nl,...mnl->...m", g_inv, gamma_first)


def _symmetrize_pairs(t: np.ndarray) -> np.ndarray:
    swap_mn = np.swapaxes(t, -4, -3)
    swap_le = np.swapaxes(t, -2, -1)
    both = np.swapaxes(swap_mn, -2, -1)
    return 0.25 * (t + swap_mn + swap_le + both)


# Index distributions of the quadratic Christoffel term of the expansion
# tensor. "printed" repeats (m, n) in both factors and leaves (l, e) free.
A_TENSOR_VARIANTS = ("printed", "paired", "crossed")
SELECTED_A_VARIANT = "paired"
SELECTED_A_SIGN = -1.0


def a_tensor(
    g_inv: np.ndarray,
    gamma_first: np.ndarray,
    d2g: np.ndarray,
    variant: str = SELECTED_A_VARIANT,
    sign: float = SELECTED_A_SIGN,
) -> np.ndarray:
    """Quartic coefficient tensor A_{mnle}, symmetrized over (m,n) and (l,e).

    The bare form is (1/12)[g^{ab} G G - 2 g_{mn,le}] with the Christoffel
    pairing chosen by ``variant``; ``sign`` multiplies the whole bracket.
    """
    n = g_inv.shape[-1]
    second = np.einsum("...lemn->...mnle", d2g)
    if variant == "printed":
        gg = np.einsum("...ab,...mna,...mnb->...mn", g_inv, gamma_first, gamma_first)
        gg = np.broadcast_to(gg[..., :, :, None, None], gg.shape + (n, n))
    elif variant == "paired":
        gg = np.einsum("...ab,...mna,...leb->...mnle", g_inv, gamma_first, gamma_first)
    elif variant == "crossed":
        gg = np.einsum("...ab,...mla,...neb->...mnle", g_inv, gamma_first, gamma_first)
    else:
        raise ValueError(f"unknown expansion-tensor variant '{variant}'")
    return _symmetrize_pairs(sign * (gg - 2.0 * second) / 12.0)


def curvature_from_derivatives(
    g_inv: np.ndarray, gamma_first: np.ndarray, d2g: np.ndarray
) -> np.ndarray:
    """Curvature scalar from second metric derivatives and first-kind symbols.

    The bracket is contracted as written and its sign flipped, so round
    spheres come out positive.
    """
    t1 = np.einsum("...ac,...nl,...acnl->...", g_inv, g_inv, d2g)
    t2 = np.einsum("...ac,...nl,...clan->...", g_inv, g_inv, d2g)
    t3 = np.einsum(
        "...ac,...nl,...mb,...acb,...nlm->...", g_inv, g_inv, g_inv, gamma_first, gamma_first
    )
    t4 = np.einsum(
        "...ac,...nl,...mb,...anm,...clb->...", g_inv, g_inv, g_inv, gamma_first, gamma_first
    )
    return -(t1 - t2 + t3 - t4)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def metric_field(metric: ChartMetric, points) -> GeometryJet:
    """Jets at a batch of points, shape ``(..., dim)``."""
    pts = np.asarray(points, dtype=float)
    g = metric.g(pts)
    g_inv, det = _checked_inverse(g, metric.name)
    dg = metric.dg(pts)
    d2g = metric.d2g(pts)
    gamma1 = christoffel_first(dg)
    return GeometryJet(
        point=pts,
        g=g,
        g_inv=g_inv,
        det_g=det,
        gamma_first=gamma1,
        gamma_second=raise_first_kind(g_inv, gamma1),
        theta=theta_vector(g_inv, gamma1),
        a_tensor=a_tensor(g_inv, gamma1, d2g),
        ricci_scalar=curvature_from_derivatives(g_inv, gamma1, d2g),
    )


def metric_jet(metric: ChartMetric, x) -> GeometryJet:
    pts = np.asarray(x, dtype=float)
    if pts.ndim != 1:
        raise InvalidMetricError(f"{metric.name}: metric_jet takes a single point")
    jet = metric_field(metric, pts)
    return replace(jet, det_g=float(jet.det_g), ricci_scalar=float(jet.ricci_scalar))


def invariant_measure(metric: ChartMetric, x):
    """sqrt(|det g|) at x (batched over leading axes)."""
    _, det = _checked_inverse(metric.g(x), metric.name)
    root = np.sqrt(np.abs(det))
    return float(root) if np.ndim(root) == 0 else root


def curvature_scalar_oracle(metric: ChartMetric, x) -> float:
    """Curvature scalar from the Riemann contraction of second-kind symbols.

    Derivatives of the symbols are central differences with the chart's
    second-derivative step, mirroring the bracket formula's resolution.
    """
    pts = np.asarray(x, dtype=float)
    n = metric.dim
    h = metric.second_step
    g_inv, _ = _checked_inverse(metric.g(pts), metric.name)
    gamma = christoffel_second(metric, pts)
    d_gamma = np.empty((n,) + gamma.shape)
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        d_gamma[k] = (christoffel_second(metric, pts + e) - christoffel_second(metric, pts - e)) / (2.0 * h)
    # R^i_{jkl} = d_k G^i_{lj} - d_l G^i_{kj} + G^i_{kp} G^p_{lj} - G^i_{lp} G^p_{kj}
    riemann = (
        np.einsum("kilj->ijkl", d_gamma)
        - np.einsum("likj->ijkl", d_gamma)
        + np.einsum("ikp,plj->ijkl", gamma, gamma)
        - np.einsum("ilp,pkj->ijkl", gamma, gamma)
    )
    ricci = np.einsum("ijil->jl", riemann)
    return float(np.einsum("jl,jl->", g_inv, ricci))
