"""Short-time propagator machinery on a chart.

Covers the Hamilton-Jacobi expansion of the principal function, damped
Gaussian moments, the curvature-corrected wave operator on lattices and the
kernel step that ties the two together.

The expansion variable xi is the displacement from the far endpoint to x,
so the kernel integrates over psi'(x - xi).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from . import constants
from .errors import (
    ConfigError,
    ConvergenceError,
    InsufficientDomainError,
    MissingBoundaryError,
    ResolutionError,
    UnsupportedSignatureError,
)
from .geometry import (
    A_TENSOR_VARIANTS,
    SELECTED_A_SIGN,
    SELECTED_A_VARIANT,
    ChartMetric,
    GeometryJet,
    a_tensor,
    metric_field,
    metric_jet,
)
from .utils import fitted_order, lattice_spacing, richardson_limit

log = logging.getLogger(__name__)

Boundary = Literal["periodic", "dirichlet"]
OperatorForm = Literal["divergence", "covariant"]

SELECTED_CUBIC_SIGN = -1.0


# ---------------------------------------------------------------------------
# Hamilton-Jacobi expansion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HJExpansion:
    jet: GeometryJet
    m: float
    metric: ChartMetric
    a: np.ndarray
    cubic_sign: float = SELECTED_CUBIC_SIGN
    variant: str = SELECTED_A_VARIANT

    @classmethod
    def at(
        cls,
        metric: ChartMetric,
        x,
        m: float,
        variant: str = SELECTED_A_VARIANT,
        a_sign: float = SELECTED_A_SIGN,
        cubic_sign: float = SELECTED_CUBIC_SIGN,
    ) -> HJExpansion:
        if not m > 0.0:
            raise ConfigError(f"mass m must be > 0, got {m}")
        jet = metric_jet(metric, x)
        if variant == SELECTED_A_VARIANT and a_sign == SELECTED_A_SIGN:
            a = jet.a_tensor
        else:
            a = a_tensor(jet.g_inv, jet.gamma_first, metric.d2g(jet.point), variant, a_sign)
        return cls(jet=jet, m=m, metric=metric, a=a, cubic_sign=cubic_sign, variant=variant)


def expansion_polynomial(g, gamma_first, a, xi, cubic_sign: float = SELECTED_CUBIC_SIGN):
    """g xi xi + cubic_sign Gamma xi xi xi + A xi xi xi xi, batched over leading axes."""
    quad = np.einsum("...mn,...m,...n->...", g, xi, xi)
    cubic = np.einsum("...mna,...m,...n,...a->...", gamma_first, xi, xi, xi)
    quartic = np.einsum("...mnle,...m,...n,...l,...e->...", a, xi, xi, xi, xi)
    return quad + cubic_sign * cubic + quartic


def hj_action(exp: HJExpansion, xi, eps: float):
    """(m / 2 eps) P(xi) + m eps / 2."""
    if eps <= 0.0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    xi = np.asarray(xi, dtype=float)
    poly = expansion_polynomial(exp.jet.g, exp.jet.gamma_first, exp.a, xi, exp.cubic_sign)
    value = 0.5 * exp.m * poly / eps + 0.5 * exp.m * eps
    return float(value) if np.ndim(value) == 0 else value


def hj_residual(exp: HJExpansion, xi, eps: float) -> float:
    """|dS/d eps + g^{mn}(x - xi) dS/dxi^m dS/dxi^n / 2m - m/2|.

    The eps-derivative is analytic; xi-derivatives use the five-point central
    stencil, which is exact on the quartic expansion polynomial.
    """
    xi = np.asarray(xi, dtype=float)
    m = exp.m
    poly = expansion_polynomial(exp.jet.g, exp.jet.gamma_first, exp.a, xi, exp.cubic_sign)
    d_eps = -0.5 * m * poly / eps**2 + 0.5 * m
    h = constants.XI_STEP
    grad = np.empty(xi.size)
    for mu in range(xi.size):
        e = np.zeros(xi.size)
        e[mu] = h
        grad[mu] = (
            8.0 * (hj_action(exp, xi + e, eps) - hj_action(exp, xi - e, eps))
            - (hj_action(exp, xi + 2.0 * e, eps) - hj_action(exp, xi - 2.0 * e, eps))
        ) / (12.0 * h)
    g_inv_far = np.linalg.inv(exp.metric.g(exp.jet.point - xi))
    return float(abs(d_eps + grad @ g_inv_far @ grad / (2.0 * m) - 0.5 * m))


@dataclass(frozen=True)
class ExpansionChoice:
    variant: str
    a_sign: float
    cubic_sign: float
    slope: float
    slopes: dict = field(default_factory=dict)


def select_expansion(
    metric: ChartMetric,
    x,
    m: float,
    eps: float,
    xi_norms: Sequence[float] = (0.02, 0.04, 0.08),
    direction=None,
) -> ExpansionChoice:
    """Fit the residual order of every candidate expansion and keep the steepest.

    Ties (e.g. on flat charts, where every candidate is exact) resolve to the
    built-in default.
    """
    x = np.asarray(x, dtype=float)
    u = np.ones(metric.dim) if direction is None else np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    candidates = [(SELECTED_A_VARIANT, SELECTED_A_SIGN, SELECTED_CUBIC_SIGN)] + [
        (variant, a_sign, cubic_sign)
        for variant in A_TENSOR_VARIANTS
        for a_sign in (1.0, -1.0)
        for cubic_sign in (1.0, -1.0)
        if (variant, a_sign, cubic_sign) != (SELECTED_A_VARIANT, SELECTED_A_SIGN, SELECTED_CUBIC_SIGN)
    ]
    floor = 1e-300
    slopes: dict[str, float] = {}
    best: ExpansionChoice | None = None
    for variant, a_sign, cubic_sign in candidates:
        exp = HJExpansion.at(metric, x, m, variant, a_sign, cubic_sign)
        residuals = [max(hj_residual(exp, r * u, eps), floor) for r in xi_norms]
        if max(residuals) < 1e-14:
            slope = math.inf
        else:
            slope = fitted_order(xi_norms, residuals)
        key = f"{variant}/{a_sign:+.0f}/{cubic_sign:+.0f}"
        slopes[key] = slope
        if best is None or slope > best.slope + 1e-6:
            best = ExpansionChoice(variant, a_sign, cubic_sign, slope)
    assert best is not None
    log.debug(f"Expansion slopes: {slopes}")
    return replace(best, slopes=slopes)


# ---------------------------------------------------------------------------
# Gaussian moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentSet:
    Q: complex
    Q_vec: np.ndarray
    Q_mat: np.ndarray
    eta: float
    v: complex


def _positive_definite(g) -> np.ndarray:
    g = np.atleast_2d(np.asarray(g, dtype=float))
    try:
        return np.linalg.cholesky(g)
    except np.linalg.LinAlgError as e:
        raise UnsupportedSignatureError(
            "Gaussian moments need a positive-definite metric at the base point"
        ) from e


def moment_normalization(g, m: float, eta: float) -> complex:
    """v with v * integral of exp[(i m - eta) g(zeta, zeta)] = 1."""
    g = np.atleast_2d(np.asarray(g, dtype=float))
    n = g.shape[0]
    return complex((eta - 1j * m) ** (0.5 * n) * math.sqrt(np.linalg.det(g)) / math.pi ** (0.5 * n))


def moments_closed_form(g_at_x, m: float, eta: float) -> MomentSet:
    if eta < 0.0:
        raise ConfigError(f"eta must be >= 0, got {eta}")
    g = np.atleast_2d(np.asarray(g_at_x, dtype=float))
    _positive_definite(g)
    n = g.shape[0]
    return MomentSet(
        Q=1.0 + 0.0j,
        Q_vec=np.zeros(n, dtype=complex),
        Q_mat=np.linalg.inv(g) / (2.0 * (eta - 1j * m)),
        eta=eta,
        v=moment_normalization(g, m, eta),
    )


def _composite_legendre(radius: float, panel_width: float, order: int):
    panels = max(1, int(math.ceil(2.0 * radius / panel_width)))
    edges = np.linspace(-radius, radius, panels + 1)
    nodes, weights = leggauss(order)
    half = 0.5 * np.diff(edges)
    centre = 0.5 * (edges[1:] + edges[:-1])
    u = (centre[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return u, w


def moments_quadrature(
    g_at_x, m: float, eta: float, radius: float | None = None, points: int | None = None
) -> MomentSet:
    """Numeric damped moments for N <= 2.

    The metric is whitened with its Cholesky factor, which turns the
    tensor-product integral into products of one-dimensional integrals; each
    is done with composite Gauss-Legendre panels narrower than the shortest
    local wavelength of the oscillating weight.
    """
    g = np.atleast_2d(np.asarray(g_at_x, dtype=float))
    n = g.shape[0]
    if n > 2:
        raise ConfigError(f"moment quadrature supports N <= 2, got N = {n}")
    if not eta > 0.0:
        raise ConfigError(f"moment quadrature needs eta > 0, got {eta}")
    chol = _positive_definite(g)
    tail = constants.TAIL_TOLERANCE
    needed = math.sqrt(math.log(1.0 / tail) / eta)
    if radius is None:
        radius = needed
    elif math.exp(-eta * radius * radius) > tail:
        raise InsufficientDomainError(
            f"radius {radius:g} leaves a damped tail of {math.exp(-eta * radius * radius):.3e} > {tail:g}; need radius >= {needed:.6g}"
        )
    order = constants.PANEL_NODES if points is None else points
    wavelength = math.pi / (m * radius)
    u, w = _composite_legendre(radius, wavelength, order)
    a = eta - 1j * m
    weight = np.exp(-a * u * u)
    i0 = np.sum(w * weight)
    i1 = np.sum(w * u * weight)
    i2 = np.sum(w * u * u * weight)

    v = moment_normalization(g, m, eta)
    jac = 1.0 / math.sqrt(np.linalg.det(g))
    whiten = np.linalg.inv(chol).T  # zeta = whiten @ u
    q = v * jac * i0**n
    q_vec_u = v * jac * i1 * i0 ** (n - 1) * np.ones(n)
    q_mat_u = v * jac * i0 ** (n - 1) * (i2 * np.eye(n))
    if n == 2:
        q_mat_u = q_mat_u + v * jac * (i1 * i1) * (1.0 - np.eye(n))
    log.debug(f"Moment quadrature: eta={eta:g}, radius={radius:.4g}, nodes={u.size}")
    return MomentSet(
        Q=complex(q),
        Q_vec=whiten @ q_vec_u,
        Q_mat=whiten @ q_mat_u @ whiten.T,
        eta=eta,
        v=v,
    )


def moments_eta_limit(
    g_at_x, m: float, etas: Sequence[float] = (1e-1, 1e-2, 1e-3), **quadrature
) -> MomentSet:
    """Quadrature moments extrapolated to eta -> 0 with a Richardson tableau."""
    sets = [moments_quadrature(g_at_x, m, eta, **quadrature) for eta in etas]
    g = np.atleast_2d(np.asarray(g_at_x, dtype=float))
    return MomentSet(
        Q=complex(richardson_limit(etas, [s.Q for s in sets])),
        Q_vec=np.asarray(richardson_limit(etas, [s.Q_vec for s in sets]), dtype=complex),
        Q_mat=np.asarray(richardson_limit(etas, [s.Q_mat for s in sets]), dtype=complex),
        eta=0.0,
        v=moment_normalization(g, m, 0.0),
    )


# ---------------------------------------------------------------------------
# Wave fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WaveField:
    """Complex samples on a regular lattice of a chart.

    Periodic axes hold n nodes of a period n*h; the last node is not repeated.
    """

    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    metric: ChartMetric
    boundary: Boundary | None = "periodic"

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if len(axes) != self.metric.dim:
            raise ConfigError(f"field has {len(axes)} axes but metric '{self.metric.name}' has dim {self.metric.dim}")
        for i, axis in enumerate(axes):
            try:
                lattice_spacing(axis)
            except ValueError as e:
                raise ConfigError(f"field axis {i}: {e}") from e
        values = np.asarray(self.values, dtype=complex)
        shape = tuple(a.size for a in axes)
        if values.shape != shape:
            raise ConfigError(f"field values have shape {values.shape}, lattice is {shape}")
        if self.boundary not in ("periodic", "dirichlet", None):
            raise ConfigError(f"unknown boundary flag '{self.boundary}'")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(
        cls,
        metric: ChartMetric,
        axes,
        fn: Callable[[np.ndarray], np.ndarray],
        boundary: Boundary | None = "periodic",
    ) -> WaveField:
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(axes, np.asarray(fn(pts), dtype=complex), metric, boundary)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(lattice_spacing(a) for a in self.axes)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def with_values(self, values) -> WaveField:
        return replace(self, values=np.asarray(values, dtype=complex).reshape(self.shape))

    def interior(self) -> np.ndarray:
        """Mask of nodes whose stencils stay on the lattice."""
        if self.boundary == "periodic":
            return np.ones(self.shape, dtype=bool)
        mask = np.ones(self.shape, dtype=bool)
        for axis in range(len(self.shape)):
            index = [slice(None)] * len(self.shape)
            index[axis] = 0
            mask[tuple(index)] = False
            index[axis] = -1
            mask[tuple(index)] = False
        return mask


def ring_axis(nodes: int, length: float = 2.0 * math.pi, start: float = 0.0) -> np.ndarray:
    return start + length * np.arange(nodes) / nodes


# ---------------------------------------------------------------------------
# Lattice operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _OperatorParts:
    stiffness: sparse.csr_matrix
    weights: np.ndarray
    ricci: np.ndarray
    first: tuple
    second: tuple
    g_inv: np.ndarray
    contracted_gamma: np.ndarray


def _forward(n: int, h: float, periodic: bool) -> sparse.csr_matrix:
    f = sparse.lil_matrix((n, n))
    f.setdiag(-1.0)
    f.setdiag(1.0, 1)
    if periodic:
        f[n - 1, 0] = 1.0
    return (f.tocsr() / h).tocsr()


def _on_axis(op, axis: int, shape: tuple[int, ...]) -> sparse.csr_matrix:
    before = int(np.prod(shape[:axis]))
    after = int(np.prod(shape[axis + 1 :]))
    return sparse.kron(sparse.identity(before), sparse.kron(op, sparse.identity(after))).tocsr()


def _check_boundary(field: WaveField) -> None:
    if field.boundary is None:
        raise MissingBoundaryError("wave field has no boundary flag; set 'periodic' or 'dirichlet'")


def _warn_metric_variation(g: np.ndarray) -> None:
    scale = float(np.max(np.abs(g)))
    if scale == 0.0:
        return
    for axis in range(g.ndim - 2):
        change = float(np.max(np.abs(np.diff(g, axis=axis)), initial=0.0)) / scale
        if change > 0.05:
            log.warning(f"metric changes by {change:.1%} per cell along axis {axis}; refine the grid")


def _operator_parts(field: WaveField) -> _OperatorParts:
    _check_boundary(field)
    periodic = field.boundary == "periodic"
    shape = field.shape
    n = len(shape)
    pts = field.points
    jets = metric_field(field.metric, pts)
    _warn_metric_variation(jets.g)
    weights = np.sqrt(np.abs(jets.det_g)).ravel()

    first = []
    second = []
    stiffness = sparse.csr_matrix((weights.size, weights.size))
    for mu, h in enumerate(field.spacing):
        f = _on_axis(_forward(shape[mu], h, periodic), mu, shape)
        first.append(0.5 * (f - f.T))
        second.append(-(f.T @ f))
        shift = np.zeros(n)
        shift[mu] = 0.5 * h
        half = pts + shift
        g_half = field.metric.g(half)
        coeff = (np.sqrt(np.abs(np.linalg.det(g_half))) * np.linalg.inv(g_half)[..., mu, mu]).ravel()
        stiffness = stiffness - f.T @ sparse.diags(coeff) @ f
    cross = weights.reshape(shape)[..., None, None] * jets.g_inv
    for mu in range(n):
        for nu in range(n):
            if mu != nu:
                stiffness = stiffness + first[mu] @ sparse.diags(cross[..., mu, nu].ravel()) @ first[nu]
    stiffness = (0.5 * (stiffness + stiffness.T)).tocsr()

    return _OperatorParts(
        stiffness=stiffness,
        weights=weights,
        ricci=np.asarray(jets.ricci_scalar).ravel(),
        first=tuple(first),
        second=tuple(second),
        g_inv=jets.g_inv.reshape(-1, n, n),
        contracted_gamma=np.einsum("...mn,...lmn->...l", jets.g_inv, jets.gamma_second).reshape(-1, n),
    )


def laplace_beltrami(field: WaveField, form: OperatorForm = "divergence") -> WaveField:
    parts = _operator_parts(field)
    psi = field.values.ravel()
    if form == "divergence":
        return field.with_values((parts.stiffness @ psi) / parts.weights)
    if form == "covariant":
        n = len(field.shape)
        out = np.zeros_like(psi)
        for mu in range(n):
            d_mu = parts.first[mu] @ psi
            out -= parts.contracted_gamma[:, mu] * d_mu
            out += parts.g_inv[:, mu, mu] * (parts.second[mu] @ psi)
            for nu in range(n):
                if nu != mu:
                    out += parts.g_inv[:, mu, nu] * (parts.first[mu] @ (parts.first[nu] @ psi))
        return field.with_values(out)
    raise ConfigError(f"unknown operator form '{form}'")


def _weighted_operator(parts: _OperatorParts, m: float) -> sparse.csr_matrix:
    """W times the bracket [LB + m^2 - R/3]; symmetric."""
    potential = parts.weights * (m * m - parts.ricci / 3.0)
    return (parts.stiffness + sparse.diags(potential)).tocsr()


def operator_matrix(field: WaveField, m: float) -> sparse.csr_matrix:
    """LB + m^2 - R/3 as a sparse matrix on the flattened lattice."""
    parts = _operator_parts(field)
    return (sparse.diags(1.0 / parts.weights) @ _weighted_operator(parts, m)).tocsr()


def schrodinger_rhs(field: WaveField, m: float) -> WaveField:
    """-(1/2m)[LB + m^2 - R/3] psi, the right side of i d(psi)/d(tau)."""
    if not m > 0.0:
        raise ConfigError(f"mass m must be > 0, got {m}")
    op = operator_matrix(field, m)
    return field.with_values(-(op @ field.values.ravel()) / (2.0 * m))


def kg_residual(field: WaveField, m: float) -> float:
    """Max-norm of [LB + m^2 - R/3] psi over nodes with on-lattice stencils."""
    op = operator_matrix(field, m)
    residual = np.abs(op @ field.values.ravel()).reshape(field.shape)
    return float(np.max(residual[field.interior()]))


def invariant_norm(field: WaveField) -> float:
    """Sum of sqrt|g| |psi|^2 times the cell volume."""
    return float(np.sum(born_density(field)) * field.cell_volume)


def born_density(field: WaveField) -> np.ndarray:
    weights = np.sqrt(np.abs(np.linalg.det(field.metric.g(field.points))))
    return weights * np.abs(field.values) ** 2


def apply_gauge(field: WaveField, gauge) -> WaveField:
    """psi -> kappa psi for an AssignedGauge-like object or an array of kappa values."""
    if hasattr(gauge, "kappa"):
        kappa = np.asarray(gauge.kappa(field.points))
    else:
        kappa = np.asarray(gauge)
    return field.with_values(kappa * field.values)


def evolve_tau(field: WaveField, m: float, dtau: float, steps: int) -> WaveField:
    """Implicit-midpoint stepping of i d(psi)/d(tau) = -(1/2m)[LB + m^2 - R/3] psi.

    The weighted operator is real symmetric, so each step is a Cayley
    transform that is unitary in the sqrt(g)-weighted norm.
    """
    if not m > 0.0:
        raise ConfigError(f"mass m must be > 0, got {m}")
    if dtau <= 0.0 or steps < 0:
        raise ConfigError(f"evolve_tau needs dtau > 0 and steps >= 0, got {dtau}, {steps}")
    parts = _operator_parts(field)
    weighted_h = -_weighted_operator(parts, m) / (2.0 * m)
    bound = float(np.max(np.abs(sparse.diags(1.0 / parts.weights) @ weighted_h).sum(axis=1)))
    if dtau * bound >= 1.0:
        log.warning(f"dtau * spectral bound = {dtau * bound:.3g} >= 1; phases will be inaccurate")
    mass = sparse.diags(parts.weights.astype(complex))
    lhs = (mass + 0.5j * dtau * weighted_h).tocsc()
    rhs = (mass - 0.5j * dtau * weighted_h).tocsr()
    try:
        lu = sparse_linalg.splu(lhs)
    except RuntimeError as e:
        raise ConvergenceError(f"implicit-midpoint factorisation failed: {e}") from e
    psi = field.values.ravel().copy()
    for step in range(steps):
        psi = lu.solve(rhs @ psi)
        if not np.all(np.isfinite(psi)):
            raise ConvergenceError(f"implicit-midpoint solve produced non-finite values at step {step}")
    log.debug(f"Evolved {steps} steps of dtau={dtau:g}, spectral bound {bound:.4g}")
    return field.with_values(psi)


# ---------------------------------------------------------------------------
# Kernel step
# ---------------------------------------------------------------------------


def kernel_step(field: WaveField, m: float, eps: float, eta: float | None = None) -> WaveField:
    """psi'(x, tau + eps) from the damped short-time kernel; returns psi' = sqrt(g) psi.

    The field is Fourier-interpolated, and the xi integral at every node runs
    along the steepest-descent ray zeta = exp(i pi/4) t with Gauss-Hermite
    nodes, zeta = xi / sqrt(2 eps).
    """
    if field.metric.dim != 1 or field.boundary != "periodic":
        raise ConfigError("kernel_step needs a periodic field on a one-dimensional chart")
    if not m > 0.0 or not eps > 0.0:
        raise ConfigError(f"kernel_step needs m > 0 and eps > 0, got m={m}, eps={eps}")
    eta = constants.ETA_RATIO * eps if eta is None else eta
    if not eta > 0.0:
        raise ConfigError(f"kernel damping eta must be > 0, got {eta}")

    axis = field.axes[0]
    n = axis.size
    h = field.spacing[0]
    jets = metric_field(field.metric, axis[:, None])
    g = jets.g[:, 0, 0]
    root_g = np.sqrt(g)
    primed = root_g * field.values

    coeff = np.fft.fft(primed) / n
    k = 2.0 * math.pi * np.fft.fftfreq(n, d=h)
    power = np.abs(coeff) ** 2
    top = np.abs(k) > 0.75 * np.max(np.abs(k))
    alias = float(power[top].sum() / max(power.sum(), np.finfo(float).tiny))
    if alias > constants.ALIAS_TOLERANCE:
        raise ResolutionError(
            f"field has {alias:.3e} of its spectral power in the top quarter of wavenumbers; refine the grid"
        )
    keep = np.abs(coeff) > constants.ALIAS_TOLERANCE * np.max(np.abs(coeff))
    coeff, k = coeff[keep], k[keep]

    s, w = hermgauss(constants.KERNEL_NODES)
    rotation = np.exp(0.25j * math.pi)
    zeta = rotation * s[None, :] / np.sqrt(m * g)[:, None]
    xi = math.sqrt(2.0 * eps) * zeta
    poly = (
        g[:, None] * xi**2
        + SELECTED_CUBIC_SIGN * jets.gamma_first[:, 0, 0, 0][:, None] * xi**3
        + jets.a_tensor[:, 0, 0, 0, 0][:, None] * xi**4
    )
    exponent = 1j * (0.5 * m * poly / eps + 0.5 * m * eps) - eta * g[:, None] * zeta**2
    v = np.sqrt(eta - 1j * m) * root_g / math.sqrt(math.pi)
    weight = (v / np.sqrt(m * g))[:, None] * rotation * w[None, :] * np.exp(exponent + s[None, :] ** 2)

    phases = np.exp(1j * np.einsum("q,jk->jkq", k, -xi))
    spread = np.einsum("jk,jkq->jq", weight, phases)
    stepped = np.einsum("jq,q,jq->j", spread, coeff, np.exp(1j * np.outer(axis, k)))
    return field.with_values(stepped)


def primed_values(field: WaveField) -> np.ndarray:
    """psi' = sqrt(g) psi at the nodes."""
    return np.sqrt(np.abs(np.linalg.det(field.metric.g(field.points)))) * field.values
